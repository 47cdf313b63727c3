"""Truncated S₂-symmetric Fock space on a rapidity grid.

n-particle wavefunctions are arrays of shape ``(N,)*n`` holding values at
Gauss-Legendre nodes; inner products carry the weights. The discrete delta
is ``δ_kl / w_k``. Exchange convention:
``(D(τ_i)Ψ)(…θ_i, θ_{i+1}…) = S₂(θ_{i+1} − θ_i) Ψ(…θ_{i+1}, θ_i…)``.
With it the smeared ZF relation reads
``z(f) z†(g) = (f|g) + ∫∫ conj f(θ) g(θ') S₂(θ' − θ) z†(θ') z(θ)``.

The wedge map Ξ(s) is modelled sector by sector; the kernel choice is explained in the
README appendix "the Ξ(s) sector kernel".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import Callable

import numpy as np

from .core import svd

N_MAX = 4


class TruncationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scattering functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatteringFunction:
    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    b: float | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __call__(self, theta):
        return self.evaluator(np.asarray(theta, dtype=complex))

    @property
    def class_tag(self) -> str:
        return "S+" if np.real(self(0.0)) > 0 else "S-"

    def axiom_residuals(self, theta: np.ndarray | None = None) -> dict[str, float]:
        """Residuals of ``conj S(θ) = S(θ)^{-1} = S(−θ) = S(θ + iπ)`` and ``|S| = 1`` on real θ."""
        th = np.linspace(-8, 8, 1601) if theta is None else np.asarray(theta, dtype=float)
        s = self(th)
        return {
            "unimodular": float(np.max(np.abs(np.abs(s) - 1))),
            "conj_inverse": float(np.max(np.abs(np.conj(s) - 1 / s))),
            "reflection": float(np.max(np.abs(self(-th) - np.conj(s)))),
            "crossing": float(np.max(np.abs(self(th + 1j * np.pi) - self(-th)))),
            "class": float(abs(abs(self(0.0)) - 1)),
        }


def constant_scattering(sign: int) -> ScatteringFunction:
    if sign not in (1, -1):
        raise ValueError("constant scattering function must be ±1")
    return ScatteringFunction("free" if sign == 1 else "ising", lambda th: np.full(np.shape(th), complex(sign)))


def sinh_gordon(b: float) -> ScatteringFunction:
    """``(sinh θ − i sin πb) / (sinh θ + i sin πb)``, b ∈ (0, 1)."""
    if not 0 < b < 1:
        raise ValueError("b must lie in (0, 1)")
    c = np.sin(np.pi * b)
    return ScatteringFunction("sinh-gordon", lambda th: (np.sinh(th) - 1j * c) / (np.sinh(th) + 1j * c), b)


def scattering_family(name: str, b: float = 0.5) -> ScatteringFunction:
    if name in ("free", "plus", "+1"):
        return constant_scattering(1)
    if name in ("ising", "minus", "-1"):
        return constant_scattering(-1)
    if name == "sinh-gordon":
        return sinh_gordon(b)
    raise ValueError(f"unknown scattering family {name!r}")


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RapidityGrid:
    cutoff: float
    n: int
    mass: float = 1.0

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self._rule[1]

    @cached_property
    def _rule(self):
        x, w = np.polynomial.legendre.leggauss(self.n)
        return self.cutoff * x, self.cutoff * w

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> complex:
        return complex(np.sum(self.weights * f(self.nodes)))

    def quadrature_check(self) -> float:
        """|∫ e^{−cosh θ}| error against a grid of twice the size."""
        ref = RapidityGrid(self.cutoff, 2 * self.n, self.mass)
        f = lambda t: np.exp(-np.cosh(t))
        return abs(self.integrate(f) - ref.integrate(f))

    def momentum(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mass * np.cosh(self.nodes), self.mass * np.sinh(self.nodes)

    def delta(self, k: int) -> np.ndarray:
        e = np.zeros(self.n, dtype=complex)
        e[k] = 1.0 / self.weights[k]
        return e


def _weight_tensor(grid: RapidityGrid, n: int) -> np.ndarray:
    w = np.ones(())
    for _ in range(n):
        w = np.multiply.outer(w, grid.weights)
    return w


def inner(grid: RapidityGrid, x: np.ndarray, y: np.ndarray) -> complex:
    return complex(np.sum(_weight_tensor(grid, np.ndim(x)) * np.conj(x) * y))


# ---------------------------------------------------------------------------
# exchange operators and projections
# ---------------------------------------------------------------------------

def _s_matrix(s2: ScatteringFunction, grid: RapidityGrid) -> np.ndarray:
    """``S[k, l] = S₂(θ_l − θ_k)``."""
    th = grid.nodes
    return s2(th[None, :] - th[:, None])


def exchange(psi: np.ndarray, i: int, smat: np.ndarray) -> np.ndarray:
    """``D_n(τ_i)`` (0-based i swaps axes i and i+1)."""
    n = psi.ndim
    if not 0 <= i < n - 1:
        raise IndexError(f"transposition index {i} out of range for n = {n}")
    out = np.swapaxes(psi, i, i + 1)
    shape = [1] * n
    shape[i], shape[i + 1] = smat.shape
    return out * smat.reshape(shape)


def exchange_operator(n: int, i: int, s2: ScatteringFunction, grid: RapidityGrid) -> Callable[[np.ndarray], np.ndarray]:
    if not 0 <= i < n - 1 or n > N_MAX:
        raise IndexError(f"exchange index {i} invalid for n = {n} (N_max = {N_MAX})")
    smat = _s_matrix(s2, grid)
    return lambda psi: exchange(psi, i, smat)


def _reduced_words(n: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Every permutation of n letters with a word in adjacent transpositions (BFS order)."""
    start = tuple(range(n))
    words = {start: ()}
    frontier = [start]
    while frontier:
        nxt = []
        for p in frontier:
            for i in range(n - 1):
                q = list(p)
                q[i], q[i + 1] = q[i + 1], q[i]
                q = tuple(q)
                if q not in words:
                    words[q] = words[p] + (i,)
                    nxt.append(q)
        frontier = nxt
    assert len(words) == factorial(n)
    return list(words.items())


def s2_project(psi: np.ndarray, smat: np.ndarray) -> np.ndarray:
    """``E_n = (1/n!) Σ_σ D_n(σ)``, each D(σ) built from its predecessor in BFS order."""
    n = psi.ndim
    if n <= 1:
        return psi.copy()
    if n > N_MAX:
        raise TruncationError(f"n = {n} exceeds N_max = {N_MAX}")
    cache = {(): psi}
    total = np.zeros_like(psi, dtype=complex)
    for _, word in sorted(_reduced_words(n), key=lambda t: len(t[1])):
        if word not in cache:
            # word = prefix + (i,) means D(τ_{w1})…D(τ_{wk}); reuse the prefix acting on Ψ
            cache[word] = exchange_apply_word(cache, word, smat)
        total = total + cache[word]
    return total / factorial(n)


def exchange_apply_word(cache, word, smat):
    """``D(τ_{w1}) D(τ_{w2}) … Ψ`` from the cached tail ``D(τ_{w2}) … Ψ``."""
    tail = word[1:]
    if tail not in cache:
        cache[tail] = exchange_apply_word(cache, tail, smat)
    return exchange(cache[tail], word[0], smat)


def s2_projection(n: int, s2: ScatteringFunction, grid: RapidityGrid) -> Callable[[np.ndarray], np.ndarray]:
    smat = _s_matrix(s2, grid)
    return lambda psi: s2_project(psi, smat)


def projection_matrix(n: int, s2: ScatteringFunction, grid: RapidityGrid) -> np.ndarray:
    """Dense E_n in weighted-orthonormal coordinates (small grids only)."""
    dim = grid.n ** n
    proj = s2_projection(n, s2, grid)
    sw = np.sqrt(_weight_tensor(grid, n)).ravel()
    cols = []
    for k in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[k] = 1.0 / sw[k]
        cols.append(proj(e.reshape((grid.n,) * n)).ravel() * sw)
    return np.array(cols).T


# ---------------------------------------------------------------------------
# Fock states and ladder operators
# ---------------------------------------------------------------------------

@dataclass
class TruncatedFockState:
    components: list[np.ndarray]

    @classmethod
    def vacuum(cls, n_max: int = N_MAX) -> "TruncatedFockState":
        return cls([np.array(1.0 + 0j)] + [None] * n_max)

    @classmethod
    def zero(cls, n_max: int = N_MAX) -> "TruncatedFockState":
        return cls([None] * (n_max + 1))

    @property
    def n_max(self) -> int:
        return len(self.components) - 1

    def __add__(self, other: "TruncatedFockState") -> "TruncatedFockState":
        out = []
        for x, y in zip(self.components, other.components):
            out.append(y if x is None else x if y is None else x + y)
        return TruncatedFockState(out)

    def __sub__(self, other: "TruncatedFockState") -> "TruncatedFockState":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "TruncatedFockState":
        return TruncatedFockState([None if x is None else c * x for x in self.components])

    def inner(self, other: "TruncatedFockState", grid: RapidityGrid) -> complex:
        total = 0j
        for x, y in zip(self.components, other.components):
            if x is not None and y is not None:
                total += inner(grid, x, y)
        return total

    def norm(self, grid: RapidityGrid) -> float:
        return float(np.sqrt(max(self.inner(self, grid).real, 0.0)))

    def symmetry_residual(self, s2: ScatteringFunction, grid: RapidityGrid) -> float:
        smat = _s_matrix(s2, grid)
        worst = 0.0
        for x in self.components:
            if x is not None and x.ndim >= 2:
                worst = max(worst, float(np.max(np.abs(s2_project(x, smat) - x))))
        return worst


@dataclass(frozen=True, eq=False)
class FockSpace:
    s2: ScatteringFunction
    grid: RapidityGrid
    n_max: int = N_MAX

    def __post_init__(self):
        if self.n_max > N_MAX:
            raise TruncationError(f"n_max capped at {N_MAX}")
        object.__setattr__(self, "smat", _s_matrix(self.s2, self.grid))

    def project(self, psi: np.ndarray) -> np.ndarray:
        return s2_project(psi, self.smat)

    def state(self, components: dict[int, np.ndarray]) -> TruncatedFockState:
        comps = [None] * (self.n_max + 1)
        for n, x in components.items():
            x = np.asarray(x, dtype=complex)
            comps[n] = self.project(x) if n >= 2 else x
        return TruncatedFockState(comps)

    def create(self, chi: np.ndarray, psi: TruncatedFockState, strict: bool = True) -> TruncatedFockState:
        """``z†(χ)Ψ_n = (n+1)^{1/2} E_{n+1}(χ ⊗ Ψ_n)``."""
        out = [None] * (self.n_max + 1)
        for n, x in enumerate(psi.components):
            if x is None:
                continue
            if n + 1 > self.n_max:
                if strict and np.any(x):
                    raise TruncationError(f"creation beyond N_max = {self.n_max}")
                continue
            out[n + 1] = np.sqrt(n + 1) * self.project(np.multiply.outer(chi, x))
        return TruncatedFockState(out)

    def annihilate(self, chi: np.ndarray, psi: TruncatedFockState) -> TruncatedFockState:
        """``z(χ)``: conjugate-linear contraction of the first variable."""
        out = [None] * (self.n_max + 1)
        wc = self.grid.weights * np.conj(chi)
        for n, x in enumerate(psi.components):
            if x is None or n == 0:
                continue
            out[n - 1] = np.sqrt(n) * np.tensordot(wc, x, axes=(0, 0))
        return TruncatedFockState(out)

    def zf_twisted_term(self, f: np.ndarray, g: np.ndarray, psi: TruncatedFockState) -> TruncatedFockState:
        """``∫∫ conj f(θ) g(θ') S₂(θ' − θ) z†(θ') z(θ) Ψ`` evaluated exactly on the grid."""
        out = [None] * (self.n_max + 1)
        w = self.grid.weights
        kern = (w * np.conj(f))[:, None] * self.smat  # kern[k, l] = w_k conj f_k S₂(θ_l − θ_k)
        for n, x in enumerate(psi.components):
            if x is None or n == 0:
                continue
            y = np.tensordot(kern, x, axes=(0, 0)) * g.reshape((-1,) + (1,) * (n - 1))
            out[n] = n * self.project(y)
        return TruncatedFockState(out)

    def zf_residual(self, f: np.ndarray, g: np.ndarray, psi: TruncatedFockState) -> float:
        """``‖z(f)z†(g)Ψ − twisted term − (f|g)Ψ‖``."""
        lhs = self.annihilate(f, self.create(g, psi))
        fg = inner(self.grid, f, g)
        rhs = self.zf_twisted_term(f, g, psi) + psi.scale(fg)
        return (lhs - rhs).norm(self.grid)

    def conjugation(self, psi: TruncatedFockState) -> TruncatedFockState:
        """``(JΨ)_n(θ_1…θ_n) = conj Ψ_n(θ_n…θ_1)``."""
        out = []
        for x in psi.components:
            if x is None:
                out.append(None)
            else:
                out.append(np.conj(np.transpose(x, tuple(range(x.ndim))[::-1])))
        return TruncatedFockState(out)

    # fields -------------------------------------------------------------

    def field(self, f: "GaussianTestFunction", psi: TruncatedFockState) -> TruncatedFockState:
        """``φ(f) = z†(f⁺) + ∫ f⁻(θ) z(θ) dθ``; the second term is ``z(conj f⁻)``."""
        fp, fm = f.plus(self.grid), f.minus(self.grid)
        return self.create(fp, psi, strict=False) + self.annihilate(np.conj(fm), psi)

    def field_prime(self, f: "GaussianTestFunction", psi: TruncatedFockState) -> TruncatedFockState:
        """``φ'(f) = J φ(f*) J``."""
        return self.conjugation(self.field(f.star(), self.conjugation(psi)))

    def commutator_residual(self, f, g, psi: TruncatedFockState) -> float:
        """``‖[φ'(f), φ(g)]Ψ‖`` (Ψ must leave two sectors of headroom)."""
        a = self.field_prime(f, self.field(g, psi))
        b = self.field(g, self.field_prime(f, psi))
        return (a - b).norm(self.grid)


@dataclass(frozen=True)
class GaussianTestFunction:
    """``f(x) = c · exp(−|x − a|²/(2σ²))`` on Minkowski space (x₀, x₁).

    Mass-shell transforms with ``p·x = p₀x₀ − p₁x₁``:
    ``f^±(θ) = c σ² exp(±i p(θ)·a) exp(−σ² m² cosh(2θ)/2)``.
    Support metadata: centre ``a`` and width σ (essential support radius ~4σ).
    """

    center: tuple[float, float]
    width: float
    amplitude: complex = 1.0

    def _transform(self, grid: RapidityGrid, sign: int) -> np.ndarray:
        p0, p1 = grid.momentum()
        a0, a1 = self.center
        phase = np.exp(sign * 1j * (p0 * a0 - p1 * a1))
        env = np.exp(-self.width ** 2 * grid.mass ** 2 * np.cosh(2 * grid.nodes) / 2)
        return self.amplitude * self.width ** 2 * phase * env

    def plus(self, grid: RapidityGrid) -> np.ndarray:
        return self._transform(grid, +1)

    def minus(self, grid: RapidityGrid) -> np.ndarray:
        """``f^-`` is the transform of ``x ↦ f(−x)``: the conjugate phase with amplitude c."""
        return self._transform(grid, -1)

    def star(self) -> "GaussianTestFunction":
        """``f*(x) = conj f(−x)``."""
        return GaussianTestFunction((-self.center[0], -self.center[1]), self.width, np.conj(self.amplitude))

    @property
    def is_real(self) -> bool:
        return abs(np.imag(self.amplitude)) == 0

    def in_right_wedge(self, radius: float = 4.0) -> bool:
        a0, a1 = self.center
        return a1 - radius * self.width > abs(a0) + radius * self.width

    def in_left_wedge(self, radius: float = 4.0) -> bool:
        a0, a1 = self.center
        return -a1 - radius * self.width > abs(a0) + radius * self.width


def field_matrix(space: FockSpace, f: GaussianTestFunction, n_top: int = 2) -> np.ndarray:
    """Dense φ(f) compressed to the S₂-symmetric sectors 0..n_top, orthonormal coordinates (small grids)."""
    g = space.grid
    blocks = []
    basis = []
    for n in range(n_top + 1):
        dim = g.n ** n
        sw = np.sqrt(_weight_tensor(g, n)).ravel()
        for k in range(dim):
            e = np.zeros(dim, dtype=complex)
            e[k] = 1.0 / sw[k]
            comps = {n: e.reshape((g.n,) * n) if n else np.array(1.0 + 0j)}
            basis.append((n, comps))
        blocks.append((dim, sw))
    offs = np.cumsum([0] + [d for d, _ in blocks])
    total = offs[-1]
    mat = np.zeros((total, total), dtype=complex)
    col = 0
    for n, comps in basis:
        st = TruncatedFockState([None] * (space.n_max + 1))
        st.components[n] = comps[n]
        img = space.field(f, st)
        for m in range(n_top + 1):
            x = img.components[m]
            if x is not None:
                mat[offs[m]: offs[m + 1], col] = np.ravel(x) * blocks[m][1]
        col += 1
    proj = np.zeros_like(mat)
    for m in range(n_top + 1):
        sl = slice(offs[m], offs[m + 1])
        proj[sl, sl] = projection_matrix(m, space.s2, g) if m >= 2 else np.eye(offs[m + 1] - offs[m])
    return proj @ mat @ proj


# ---------------------------------------------------------------------------
# wedge map Ξ(s)
# ---------------------------------------------------------------------------

def one_particle_kernel(grid: RapidityGrid, s: float) -> np.ndarray:
    """Sector-1 operator in orthonormal coordinates.

    ``(T_s ψ)(θ) = e^{−m s cosh θ} ∫ 2 P(θ − θ') ψ(θ') dθ'`` with
    ``P(u) = 1/(2π cosh u)`` the mid-line Poisson kernel of the strip of
    width π, counted once per boundary.
    """
    th, w = grid.nodes, grid.weights
    decay = np.exp(-grid.mass * s * np.cosh(th))
    pk = 1.0 / (np.pi * np.cosh(th[:, None] - th[None, :]))
    k = decay[:, None] * pk
    sw = np.sqrt(w)
    return sw[:, None] * k * sw[None, :]


@dataclass
class SectorNorms:
    s: float
    singular_values: dict[int, np.ndarray]
    truncation_flag: bool

    def schatten(self, n: int, p: float) -> float:
        sv = self.singular_values[n]
        return float(np.sum(sv ** p) ** (1 / p)) if sv.size else 0.0

    def power_sum(self, n: int, p: float) -> float:
        return float(np.sum(self.singular_values[n] ** p))

    @property
    def norm1_total(self) -> float:
        return 1.0 + sum(float(np.sum(v)) for k, v in self.singular_values.items() if k > 0)


def _low_rank(t: np.ndarray, tail: float = 1e-7):
    """Smallest SVD truncation whose discarded singular values sum to ≤ tail·‖t‖₁."""
    u, s, vh = svd(t)
    if s[0] == 0:
        return u[:, :0], s[:0], vh[:0].conj().T
    rest = np.cumsum(s[::-1])[::-1]  # rest[r] = Σ_{i ≥ r} s_i
    r = int(np.argmax(np.append(rest[1:], 0.0) <= tail * rest[0])) + 1
    return u[:, :r], s[:r], vh[:r].conj().T


def _sector2_gram(u: np.ndarray, smat: np.ndarray) -> np.ndarray:
    """``(U⊗U)* E₂ (U⊗U)`` with E₂ = (1 + D(τ))/2 in orthonormal coordinates."""
    r = u.shape[1]
    uu = np.conj(u).T @ u
    direct = np.einsum("ik,jl->ijkl", uu, uu)
    pair = (np.conj(u)[:, :, None] * u[:, None, :]).reshape(-1, r * r)  # [a, (i, l)] = conj u_i(a) u_l(a)
    swapped = ((smat.T @ pair).T @ pair).reshape(r, r, r, r).transpose(0, 2, 3, 1)
    g = 0.5 * (direct + swapped)
    return g.reshape(r * r, r * r)


def _range_factor(g: np.ndarray) -> np.ndarray:
    """F with ``F F* = g`` restricted to the numerical range of the PSD matrix g."""
    w, v = np.linalg.eigh((g + g.conj().T) / 2)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    return v[:, keep] * np.sqrt(w[keep])


def xi_s_sector(s: float, s2: ScatteringFunction, grid: RapidityGrid, sectors: int = 2) -> SectorNorms:
    """Singular values of the sector components of Ξ(s) for n = 0, 1, 2."""
    if s <= 0:
        raise ValueError("splitting distance must be positive")
    edge = np.exp(-grid.mass * s * np.cosh(grid.cutoff))
    t = one_particle_kernel(grid, s)
    if not np.all(np.isfinite(t)):
        raise FloatingPointError("sector kernel overflowed")
    sv = {0: np.array([1.0])}
    u, sig, v = _low_rank(t)
    sv[1] = sig
    if sectors >= 2:
        smat = _s_matrix(s2, grid)
        # ‖E(U⊗U) Σ⊗Σ (V⊗V)*E‖₁ = ‖F_U* (Σ⊗Σ) F_V‖₁ with F F* the Gram matrices
        fu = _range_factor(_sector2_gram(u, smat))
        fv = _range_factor(_sector2_gram(v, smat))
        core = (fu.conj().T * np.kron(sig, sig)) @ fv
        sv[2] = svd(core, compute_uv=False)
    return SectorNorms(s, sv, truncation_flag=bool(edge > 1e-12))


@dataclass
class DecayRow:
    family: str
    b: float | None
    s: float
    norm1_total: float
    ln_norm1: float
    sector1_norm: float
    sector2_norm: float
    ec_proxy_half: float
    ceiling: float = 1 / np.e

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def geometric_grid(s_min: float = 0.5, s_max: float = 10.0, points: int = 12) -> np.ndarray:
    return np.geomspace(s_min, s_max, points)


def decay_experiment(s2: ScatteringFunction, s_grid=None, mass: float = 1.0, cutoff: float = 6.0, n: int = 200) -> list[DecayRow]:
    """``(s, ‖Ξ(s)‖₁, ln‖Ξ(s)‖₁, sector norms, c_{1/2}ν^{1/2} proxy)`` rows."""
    s_grid = geometric_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    grid = RapidityGrid(cutoff, n, mass)
    rows = []
    for s in s_grid:
        sec = xi_s_sector(float(s), s2, grid)
        total = sec.norm1_total
        nu_half_p = 1.0 + sec.power_sum(1, 0.5) + sec.power_sum(2, 0.5)
        rows.append(DecayRow(s2.name, s2.b, float(s), total, float(np.log(total)), sec.schatten(1, 1.0),
                             sec.schatten(2, 1.0), 2 / np.e * nu_half_p))
    return rows


def is_monotone_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))

"""Relative entropy, von Neumann entropy and subalgebra entropies.

Relative entropy has two independent evaluations: the trace formula on block
densities and the spectral integral of the relative modular operator in the
standard representation. Suprema over convex decompositions are estimated
from below by gradient ascent over rank-one refinements (outputs carry the
label ``"lower estimate"``); infima likewise carry ``"upper estimate"``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import (
    AlgebraError,
    FactorDecomposition,
    MatrixAlgebra,
    StateFunctional,
    dagger,
    density_entropy,
    full_algebra,
    generate_algebra,
    hermitian_part,
    op_norm,
)
from .modular import relative_modular

LOG_FLOOR = 1e-300
SUPPORT_TOL = 1e-12


def _density(x) -> np.ndarray:
    return np.asarray(getattr(x, "density", x), dtype=complex)


def _blocks(phi, m: MatrixAlgebra | None) -> list[np.ndarray]:
    d = _density(phi)
    if m is None:
        if isinstance(phi, StateFunctional) and phi.algebra is not None:
            return phi.block_densities()
        return [d]
    return m.decomposition.block_densities(d)


def _trace_relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``tr ρ(log ρ − log σ)`` for PSD inputs, +∞ when supp ρ ⊄ supp σ."""
    lr, vr = np.linalg.eigh(hermitian_part(rho))
    ls, vs = np.linalg.eigh(hermitian_part(sigma))
    scale = max(lr.max(initial=0.0), ls.max(initial=0.0), 1e-300)
    lr = np.where(lr > SUPPORT_TOL * scale, lr, 0.0)
    s_pos = ls > SUPPORT_TOL * scale
    overlap = np.abs(dagger(vs) @ vr) ** 2  # overlap[s, r] = |<s|r>|^2
    if np.any((overlap[~s_pos][:, lr > 0]).sum(axis=0) > 1e-9):
        return float("inf")
    pos = lr > 0
    a = float(np.sum(lr[pos] * np.log(lr[pos])))
    logs = np.log(ls[s_pos])
    b = float(np.sum(lr[pos] * (overlap[s_pos][:, pos] * logs[:, None]).sum(axis=0)))
    return a - b


def relative_entropy_density(phi, psi, m: MatrixAlgebra | None = None) -> float:
    """``Σ_k tr ρ_k(log ρ_k − log σ_k)`` over the blocks of ``m`` (positive functionals)."""
    return float(sum(_trace_relative_entropy(r, s) for r, s in zip(_blocks(phi, m), _blocks(psi, m))))


def _standard_vector(rhos: Sequence[np.ndarray]) -> np.ndarray:
    """``⊕_k vec(ρ_k^{1/2})`` in ``⊕_k C^{d_k} ⊗ C^{d_k}``."""
    parts = []
    for r in rhos:
        w, v = np.linalg.eigh(hermitian_part(r))
        parts.append(((v * np.sqrt(np.clip(w, 0.0, None))) @ dagger(v)).ravel())
    return np.concatenate(parts)


def _standard_algebra(dims: Sequence[int]) -> MatrixAlgebra:
    n = sum(d * d for d in dims)
    basis, o = [], 0
    for d in dims:
        for i in range(d):
            for j in range(d):
                e = np.zeros((n, n), dtype=complex)
                e[o: o + d * d, o: o + d * d] = np.kron(_unit(d, i, j), np.eye(d)) / np.sqrt(d)
                basis.append(e)
        o += d * d
    return MatrixAlgebra(np.array(basis))


def _unit(d, i, j):
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def relative_entropy_spectral(phi, psi, m: MatrixAlgebra | None = None) -> float:
    """``−(ξ | log Δ_{η,ξ} ξ)`` with ξ, η the cone vectors of φ, ψ in the standard representation."""
    rb, sb = _blocks(phi, m), _blocks(psi, m)
    alg = _standard_algebra([r.shape[0] for r in rb])
    xi, eta_v = _standard_vector(rb), _standard_vector(sb)
    if np.linalg.norm(xi) == 0:
        return 0.0
    if np.linalg.norm(eta_v) == 0:
        return float("inf")
    return relative_modular(xi, eta_v, alg).entropy()


def _cocycle_phi_value(rb, sb, t: float) -> complex:
    """``φ((Dψ:Dφ)_t) = Σ_k tr ρ_k σ_k^{it} ρ_k^{-it}``."""
    total = 0.0 + 0.0j
    for r, s in zip(rb, sb):
        lr, vr = np.linalg.eigh(hermitian_part(r))
        ls, vs = np.linalg.eigh(hermitian_part(s))
        if lr.min() <= 0 or ls.min() <= 0:
            raise AlgebraError("cocycle derivative requires faithful functionals")
        a = (vs * np.exp(1j * t * np.log(ls))) @ dagger(vs)
        b = (vr * np.exp(-1j * t * np.log(lr))) @ dagger(vr)
        total += np.trace(r @ a @ b)
    return total


def cocycle_derivative(phi, psi, m: MatrixAlgebra | None = None, h: float = 1e-4) -> float:
    """``i d/dt φ((Dψ:Dφ)_t)`` at t = 0: central difference plus one Richardson step."""
    rb, sb = _blocks(phi, m), _blocks(psi, m)

    def central(step):
        return (_cocycle_phi_value(rb, sb, step) - _cocycle_phi_value(rb, sb, -step)) / (2 * step)

    d = (4 * central(h / 2) - central(h)) / 3
    return float(np.real(1j * d))


def von_neumann_entropy(phi, m: MatrixAlgebra | None = None, tol: float = 1e-10) -> float:
    """``Σ_k tr η(ρ_k)`` on the factor blocks; requires a state."""
    rb = _blocks(phi, m)
    total = sum(float(np.real(np.trace(r))) for r in rb)
    if abs(total - 1.0) > tol:
        raise AlgebraError(f"von Neumann entropy needs a state, got φ(1) = {total:.6g}")
    return float(sum(density_entropy(r) for r in rb))


# ---------------------------------------------------------------------------
# decomposition search
# ---------------------------------------------------------------------------

@dataclass
class DecompositionEstimate:
    """Best value of a decomposition search with the decomposition realizing it."""

    value: float
    kind: str
    weights: np.ndarray
    vectors: np.ndarray  # columns: unit vectors of the rank-one components
    converged: bool = True
    history: list[float] = field(default_factory=list)

    def densities(self) -> list[np.ndarray]:
        return [w * np.outer(v, np.conj(v)) for w, v in zip(self.weights, self.vectors.T)]


def _batched_restriction(dec: FactorDecomposition, vecs: np.ndarray) -> list[np.ndarray]:
    """Block densities ``(K, d, d)`` of the rank-one functionals ``w_l w_l*``."""
    u = dec.unitary @ vecs
    out = []
    for (d, m), o in zip(dec.blocks, dec.offsets):
        b = u[o: o + d * m].reshape(d, m, -1)
        out.append(np.einsum("iak,jak->kij", b, np.conj(b)))
    return out


def _batched_pullback(dec: FactorDecomposition, grads: list[np.ndarray], vecs: np.ndarray) -> np.ndarray:
    """Columns ``Φ*(G_l) w_l`` with ``Φ*(G) = W*(⊕ G_k ⊗ 1)W``."""
    u = dec.unitary @ vecs
    out = np.zeros_like(u)
    for g, (d, m), o in zip(grads, dec.blocks, dec.offsets):
        b = u[o: o + d * m].reshape(d, m, -1)
        out[o: o + d * m] = np.einsum("kij,jak->iak", g, b).reshape(d * m, -1)
    return dagger(dec.unitary) @ out


def _batched_log(x: np.ndarray, floor: float = 1e-15) -> tuple[np.ndarray, np.ndarray]:
    """``Σ tr x log x`` per batch entry and the clipped matrix log."""
    w, v = np.linalg.eigh(hermitian_part(x))
    w = np.clip(w, 0.0, None)
    xlogx = np.where(w > 0, w * np.log(np.maximum(w, LOG_FLOOR)), 0.0).sum(axis=-1)
    logm = np.einsum("kij,kj,klj->kil", v, np.log(np.maximum(w, floor)), np.conj(v))
    return xlogx, logm


# A term maps batched block densities to (per-component values, per-block gradients).
Term = Callable[[list[np.ndarray], np.ndarray], tuple[np.ndarray, list[np.ndarray]]]


def formation_term(blocks: list[np.ndarray], lam: np.ndarray):
    """``λ_l S(σ_l / λ_l)`` summed over blocks, with its gradient."""
    vals = np.where(lam > 0, lam * np.log(np.maximum(lam, LOG_FLOOR)), 0.0)
    grads = []
    loglam = np.log(np.maximum(lam, 1e-15))
    for b in blocks:
        xlogx, logm = _batched_log(b)
        vals = vals - xlogx
        grads.append(-(logm - loglam[:, None, None] * np.eye(b.shape[1])))
    return vals, grads


def make_conditional_term(tau_blocks: list[np.ndarray]) -> Term:
    """``λ_l S_A(φ_l ‖ φ)`` for φ_l = σ_l / λ_l, given the blocks of φ|_A."""
    logs = []
    for t in tau_blocks:
        w, v = np.linalg.eigh(hermitian_part(t))
        logs.append((v * np.log(np.maximum(w, 1e-300))) @ dagger(v))

    def term(blocks, lam):
        vals = -np.where(lam > 0, lam * np.log(np.maximum(lam, LOG_FLOOR)), 0.0)
        grads = []
        loglam = np.log(np.maximum(lam, 1e-15))
        for b, lt in zip(blocks, logs):
            xlogx, logm = _batched_log(b)
            cross = np.real(np.einsum("kij,ji->k", b, lt))
            vals = vals + xlogx - cross
            grads.append(logm - loglam[:, None, None] * np.eye(b.shape[1]) - lt[None])
        return vals, grads

    return term


def _inv_sqrt_divided_differences(a: np.ndarray):
    w, u = np.linalg.eigh(hermitian_part(a))
    w = np.maximum(w, 1e-300)
    f = w ** -0.5
    diff = w[:, None] - w[None, :]
    same = np.abs(diff) <= 1e-12 * np.maximum(w[:, None], w[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        gam = np.where(same, 0.0, (f[:, None] - f[None, :]) / np.where(same, 1.0, diff))
    deriv = -0.5 * w ** -1.5
    gam = np.where(same, 0.5 * (deriv[:, None] + deriv[None, :]), gam)
    z = (u * f) @ dagger(u)
    return z, u, gam


@dataclass
class PureDecompositionProblem:
    """``f(Y) = Σ_l term(Φ(w_l w_l*))`` with ``w_l = R Z Y e_l``, ``Z = (Y Y*)^{-1/2}``.

    R carries the square-root eigenbasis of ρ so ``Σ_l w_l w_l* = ρ`` for
    every full-rank Y; Φ restricts to the blocks of ``dec``.
    """

    root: np.ndarray
    dec: FactorDecomposition
    term: Term
    k: int

    @classmethod
    def build(cls, rho: np.ndarray, dec: FactorDecomposition, term: Term, k: int | None = None):
        w, v = np.linalg.eigh(hermitian_part(rho))
        keep = w > SUPPORT_TOL * max(w.max(), 1e-300)
        root = v[:, keep] * np.sqrt(w[keep])
        n = rho.shape[0]
        return cls(root, dec, term, k or n * n)

    @property
    def rank(self) -> int:
        return self.root.shape[1]

    def vectors(self, y: np.ndarray) -> np.ndarray:
        z, _, _ = _inv_sqrt_divided_differences(y @ dagger(y))
        return self.root @ z @ y

    def value_and_grad(self, y: np.ndarray) -> tuple[float, np.ndarray]:
        z, u, gam = _inv_sqrt_divided_differences(y @ dagger(y))
        m = z @ y
        w = self.root @ m
        lam = np.real(np.sum(np.abs(w) ** 2, axis=0))
        blocks = _batched_restriction(self.dec, w)
        vals, grads = self.term(blocks, lam)
        gw = _batched_pullback(self.dec, grads, w)
        gm = dagger(self.root) @ gw
        h = gm @ dagger(y)
        kk = u @ (gam * (dagger(u) @ h @ u)) @ dagger(u)
        g = z @ gm + (kk + dagger(kk)) @ y
        return float(np.sum(vals)), g

    def _pack(self, y):
        return np.concatenate([y.real.ravel(), y.imag.ravel()])

    def _unpack(self, x):
        half = x.size // 2
        return (x[:half] + 1j * x[half:]).reshape(self.rank, self.k)

    def optimize(self, rng, restarts: int, sign: float, seeds: Sequence[np.ndarray] = (), maxiter: int = 500,
                 gtol: float = 1e-9) -> tuple[float, np.ndarray, bool]:
        """Best of several L-BFGS runs of ``sign · f``; returns (f, Y, converged)."""

        def fun(x):
            val, g = self.value_and_grad(self._unpack(x))
            return sign * val, sign * 2 * self._pack(g)

        starts = [np.asarray(s, dtype=complex) for s in seeds]
        for _ in range(restarts):
            starts.append(rng.normal(size=(self.rank, self.k)) + 1j * rng.normal(size=(self.rank, self.k)))
        best, best_y, conv = np.inf, None, False
        for y0 in starts:
            res = minimize(fun, self._pack(y0), jac=True, method="L-BFGS-B",
                           options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-13})
            if res.fun < best:
                best, best_y, conv = float(res.fun), self._unpack(res.x), bool(res.success)
        return sign * best, best_y, conv


def identity_seed(rank: int, k: int, rng, noise: float = 1e-3) -> np.ndarray:
    """Eigen-decomposition start, padded with small noise for the extra components."""
    y = noise * (rng.normal(size=(rank, k)) + 1j * rng.normal(size=(rank, k)))
    y[:, :rank] += np.eye(rank)
    return y


def _factor_reduction(phi, a: MatrixAlgebra, b: MatrixAlgebra | None):
    """Density of φ on the factor b and the image of A inside b's matrix block."""
    rho = _density(phi)
    if b is None:
        return rho, a
    if not b.contains_algebra(a, 1e-8):
        raise AlgebraError("A is not contained in B")
    if not b.is_factor():
        raise AlgebraError("subalgebra entropy is implemented for factors B")
    dec = b.decomposition
    rho_b = dec.block_densities(rho)[0]
    coords = [dec.block_coordinates(x)[0] for x in a.basis]
    return rho_b, generate_algebra(coords)


def subalgebra_entropy(phi, a: MatrixAlgebra, b: MatrixAlgebra | None = None, rng=None, restarts: int = 32,
                       k: int | None = None, seeds: Sequence[np.ndarray] = ()) -> DecompositionEstimate:
    """Lower estimate of ``H_φ^B(A)`` by ascent over rank-one decompositions of φ on B.

    Decompositions of φ on a factor B are ``φ_l = φ(b_l^{1/2} · b_l^{1/2})``
    with positive ``b_l`` in the commutant of the GNS representation; rank-one
    refinements only increase the objective, so they suffice.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rho, a_red = _factor_reduction(phi, a, b)
    if a_red.dim == 1:
        n = rho.shape[0]
        return DecompositionEstimate(0.0, "lower estimate", np.array([1.0]), np.eye(n)[:, :1])
    dec = a_red.decomposition
    tau = dec.block_densities(rho)
    prob = PureDecompositionProblem.build(rho, dec, make_conditional_term(tau), k)
    all_seeds = [identity_seed(prob.rank, prob.k, rng)] + list(seeds)
    val, y, conv = prob.optimize(rng, restarts, sign=-1.0, seeds=all_seeds)
    w = prob.vectors(y)
    lam = np.real(np.sum(np.abs(w) ** 2, axis=0))
    vecs = w / np.sqrt(np.maximum(lam, 1e-300))
    return DecompositionEstimate(max(val, 0.0), "lower estimate", lam, vecs, conv)


def decomposition_value(phi, a: MatrixAlgebra, weights: np.ndarray, vectors: np.ndarray) -> float:
    """``Σ_l λ_l S_A(φ_l ‖ φ)`` for an explicit rank-one decomposition (ambient vectors)."""
    rho = _density(phi)
    total = 0.0
    for lam, v in zip(weights, vectors.T):
        if lam <= 0:
            continue
        total += lam * relative_entropy_density(np.outer(v, np.conj(v)), rho, a)
    return total


def entropy_supremum_estimate(phi, rng=None, restarts: int = 8) -> DecompositionEstimate:
    """Lower estimate of ``sup Σ λ_l S(φ_l ‖ φ)`` on the full matrix algebra."""
    rho = _density(phi)
    return subalgebra_entropy(rho, full_algebra(rho.shape[0]), None, rng=rng, restarts=restarts)


# ---------------------------------------------------------------------------
# Otani entropy
# ---------------------------------------------------------------------------

@dataclass
class OtaniEstimate:
    value: float
    kind: str
    best_index: int
    candidate_values: list[float]


def conditional_entropy_upper(phi, a: MatrixAlgebra, b: MatrixAlgebra | None = None) -> float:
    """Certified upper bound ``H_φ^B(A) ≤ min(S_A(φ), S_B(φ))``."""
    rho = _density(phi)
    s_a = von_neumann_entropy(rho / np.trace(rho).real, a)
    s_b = von_neumann_entropy(rho / np.trace(rho).real, b)
    return min(s_a, s_b)


def dominates_on(phi, omega, lam: float, a: MatrixAlgebra, tol: float = 1e-10) -> bool:
    diff = [x - lam * y for x, y in zip(_blocks(phi, a), _blocks(omega, a))]
    return all(np.linalg.eigvalsh(hermitian_part(d)).min() >= -tol for d in diff)


def otani_entropy_upper(omega, a: MatrixAlgebra, b: MatrixAlgebra | None, candidates) -> OtaniEstimate:
    """Upper estimate ``min_j H_{φ_j}^B(A) / λ_j`` over feasible pairs ``φ_j ≥ λ_j ω`` on A."""
    vals = []
    for phi, lam in candidates:
        if not (0 < lam <= 1 + 1e-12) or not dominates_on(phi, omega, lam, a):
            vals.append(float("inf"))
            continue
        vals.append(conditional_entropy_upper(phi, a, b) / lam)
    if not vals or not np.isfinite(min(vals)):
        raise AlgebraError("no feasible Otani candidate")
    j = int(np.argmin(vals))
    return OtaniEstimate(vals[j], "upper estimate", j, vals)

"""Completely positive maps in the Heisenberg picture.

Choi convention: ``Choi(F) = Σ_ij F(E_ij) ⊗ E_ij`` (output leg first).
A cp map is stored by its Choi matrix; Kraus operators ``T`` act as
``F(x) = Σ T x T*``, so unitality reads ``Σ T T* = 1``.

Minimal dilations of properly infinite algebras have no finite-dimensional
instance; only their Kraus/Stinespring shadow on matrix algebras is built.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import AlgebraError, SeparableState, dagger, hermitian_part, op_norm

CP_TOL = 1e-10


class ChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CpMap:
    choi: np.ndarray
    dim_in: int
    dim_out: int

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], dim_in: int) -> "CpMap":
        blocks = []
        for i in range(dim_in):
            for j in range(dim_in):
                e = np.zeros((dim_in, dim_in), dtype=complex)
                e[i, j] = 1.0
                blocks.append(np.asarray(f(e), dtype=complex))
        dim_out = blocks[0].shape[0]
        t = np.array(blocks).reshape(dim_in, dim_in, dim_out, dim_out)
        choi = t.transpose(2, 0, 3, 1).reshape(dim_out * dim_in, dim_out * dim_in)
        return cls(choi, dim_in, dim_out)

    @classmethod
    def from_kraus(cls, ops: Sequence[np.ndarray]) -> "CpMap":
        ops = np.asarray(ops, dtype=complex)
        _, dim_out, dim_in = ops.shape
        vecs = ops.reshape(len(ops), dim_out * dim_in)
        return cls(vecs.T @ np.conj(vecs), dim_in, dim_out)

    def _tensor(self) -> np.ndarray:
        return self.choi.reshape(self.dim_out, self.dim_in, self.dim_out, self.dim_in)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("oipj,ij->op", self._tensor(), x)

    def dual(self, rho: np.ndarray) -> np.ndarray:
        """Predual action on densities: ``Tr(dual(ρ) x) = Tr(ρ F(x))``."""
        return np.einsum("qo,oiqj->ji", rho, self._tensor())

    def compose(self, other: "CpMap") -> "CpMap":
        """``self ∘ other``."""
        return CpMap.from_function(lambda x: self(other(x)), other.dim_in)

    @property
    def min_choi_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(hermitian_part(self.choi)).min())

    def is_cp(self, tol: float = CP_TOL) -> bool:
        return self.min_choi_eigenvalue >= -tol

    def is_unital(self, tol: float = CP_TOL) -> bool:
        return op_norm(self(np.eye(self.dim_in)) - np.eye(self.dim_out)) <= tol

    def ampliation(self, n: int, x: np.ndarray) -> np.ndarray:
        """``(1_n ⊗ F)(x)`` for x on ``C^n ⊗ C^dim_in``."""
        t = x.reshape(n, self.dim_in, n, self.dim_in)
        out = np.einsum("oipj,aibj->aobp", self._tensor(), t)
        return out.reshape(n * self.dim_out, n * self.dim_out)

    def is_n_positive(self, n: int, samples: int = 0, rng=None, tol: float = CP_TOL) -> bool:
        """Positivity of ``1_n ⊗ F`` on the maximally entangled projector plus random PSD inputs."""
        d = self.dim_in
        tests = []
        if n >= d:
            omega = np.zeros(n * d, dtype=complex)
            for i in range(d):
                omega[i * d + i] = 1.0
            tests.append(np.outer(omega, omega))
        rng = np.random.default_rng(0) if rng is None else rng
        for _ in range(samples):
            v = rng.normal(size=n * d) + 1j * rng.normal(size=n * d)
            tests.append(np.outer(v, np.conj(v)))
        return all(np.linalg.eigvalsh(hermitian_part(self.ampliation(n, x))).min() >= -tol for x in tests)


def kraus_from_choi(f: CpMap, tol: float = CP_TOL) -> list[np.ndarray]:
    """Kraus family from the eigendecomposition of the Choi matrix (one per nonzero eigenvalue)."""
    w, v = np.linalg.eigh(hermitian_part(f.choi))
    scale = max(float(np.abs(w).max(initial=0.0)), 1.0)
    if w.min() < -tol * scale:
        raise ChannelError(f"Choi matrix is not PSD (min eigenvalue {w.min():.3e})")
    keep = w > tol * scale
    return [np.sqrt(lam) * v[:, k].reshape(f.dim_out, f.dim_in) for lam, k in zip(w[keep], np.flatnonzero(keep))]


def kraus_completeness_residual(ops: Sequence[np.ndarray]) -> float:
    s = sum(t @ dagger(t) for t in ops)
    return op_norm(s - np.eye(s.shape[0]))


def kraus_apply(ops: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    return sum(t @ x @ dagger(t) for t in ops)


@dataclass(frozen=True)
class Dilation:
    """``F(a) = V* π(a) V`` with ``π(a) = 1_r ⊗ a``."""

    isometry: np.ndarray
    multiplicity: int

    def representation(self, a: np.ndarray) -> np.ndarray:
        return np.kron(np.eye(self.multiplicity), a)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        v = self.isometry
        return dagger(v) @ self.representation(a) @ v


def stinespring(f: CpMap) -> Dilation:
    if not f.is_unital():
        raise ChannelError("Stinespring isometry requires a unital map")
    ops = kraus_from_choi(f)
    v = np.vstack([dagger(t) for t in ops])
    return Dilation(v, len(ops))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def group_average(unitaries: Sequence[np.ndarray]) -> CpMap:
    """Haar average ``x ↦ |G|^{-1} Σ_g U(g) x U(g)*`` over a finite group."""
    g = len(unitaries)
    return CpMap.from_kraus([u / np.sqrt(g) for u in unitaries])


def tensor_embedding(dim_a: int, dim_b: int) -> CpMap:
    """``a ↦ a ⊗ 1``."""
    return CpMap.from_function(lambda a: np.kron(a, np.eye(dim_b)), dim_a)


def slice_map(omega_b: np.ndarray, dim_a: int) -> CpMap:
    """``a ⊗ b ↦ a ω_B(b)`` on ``M_dA ⊗ M_dB``."""
    db = omega_b.shape[0]

    def f(x):
        t = x.reshape(dim_a, db, dim_a, db)
        return np.einsum("aibj,ji->ab", t, omega_b)

    return CpMap.from_function(f, dim_a * db)


def measurement(projections: Sequence[np.ndarray], tol: float = CP_TOL) -> list[CpMap]:
    """Branch maps ``a ↦ P_k a P_k`` of a von Neumann measurement."""
    total = sum(projections)
    n = total.shape[0]
    if op_norm(total - np.eye(n)) > tol:
        raise ChannelError("measurement projections do not sum to the identity")
    for p in projections:
        if op_norm(p @ p - p) > tol or op_norm(p - dagger(p)) > tol:
            raise ChannelError("measurement family contains a non-projection")
    return [CpMap.from_kraus([p]) for p in projections]


def expectation_constructor(kind: str, **params) -> CpMap | list[CpMap]:
    if kind == "group_average":
        return group_average(params["unitaries"])
    if kind == "tensor_embed":
        return tensor_embedding(params["dim_a"], params["dim_b"])
    if kind == "slice":
        return slice_map(params["omega_b"], params["dim_a"])
    if kind == "measurement":
        return measurement(params["projections"])
    raise ChannelError(f"unknown constructor kind {kind!r}")


def conditional_expectation_residuals(f: CpMap, lift: Callable[[np.ndarray], np.ndarray], rng, samples: int = 5) -> tuple[float, float]:
    """Idempotence and bimodule residuals of ``f`` onto its range.

    ``lift`` embeds range elements back into the domain (identity when the
    range sits inside the domain, ``a ↦ a ⊗ 1`` for slice maps).
    """
    worst_idem = worst_bimod = 0.0
    d, o = f.dim_in, f.dim_out
    for _ in range(samples):
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        y = f(x)
        worst_idem = max(worst_idem, op_norm(f(lift(y)) - y))
        a = f(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        b = f(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        lhs = f(lift(a) @ x @ lift(b))
        worst_bimod = max(worst_bimod, op_norm(lhs - a @ y @ b))
    return worst_idem, worst_bimod


def instrument_branches(maps: Sequence[CpMap], rho: np.ndarray, tol: float = 0.0):
    """``ω ↦ (p_k, F_k*ω / p_k)`` for branches with ``p_k > tol``."""
    out = []
    for f in maps:
        r = f.dual(rho)
        p = float(np.real(np.trace(r)))
        if p > tol:
            out.append((p, r / p))
    return out


# ---------------------------------------------------------------------------
# separable operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SeparableOperation:
    """Family of local cp maps ``F_j = F_A^j ⊗ F_B^j`` given by Kraus lists."""

    branches: tuple[tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]], ...]

    @property
    def dims(self) -> tuple[int, int]:
        ka, kb = self.branches[0]
        return ka[0].shape[1], kb[0].shape[1]

    def branch_map(self, j: int) -> CpMap:
        ka, kb = self.branches[j]
        return CpMap.from_kraus([np.kron(a, b) for a in ka for b in kb])

    def completeness_residual(self) -> float:
        s = 0
        for ka, kb in self.branches:
            s = s + np.kron(sum(a @ dagger(a) for a in ka), sum(b @ dagger(b) for b in kb))
        return op_norm(s - np.eye(s.shape[0]))

    def apply(self, rho: np.ndarray, tol: float = 1e-14):
        """Branch probabilities and normalized branch densities."""
        out = []
        for ka, kb in self.branches:
            r = sum(dagger(np.kron(a, b)) @ rho @ np.kron(a, b) for a in ka for b in kb)
            p = float(np.real(np.trace(r)))
            out.append((p, r / p if p > tol else None))
        return out

    def apply_separable(self, sigma: SeparableState) -> list[SeparableState | None]:
        """Term-by-term image; every branch stays a sum of products."""
        out = []
        for ka, kb in self.branches:
            terms = []
            for w, ra, rb in sigma.terms:
                na = sum(dagger(a) @ ra @ a for a in ka)
                nb = sum(dagger(b) @ rb @ b for b in kb)
                ta, tb = float(np.real(np.trace(na))), float(np.real(np.trace(nb)))
                if w * ta * tb > 0:
                    terms.append((w * ta * tb, na / ta, nb / tb))
            out.append(SeparableState(tuple(terms), (ka[0].shape[0], kb[0].shape[0])) if terms else None)
        return out


def separable_operation(branches, tol: float = CP_TOL) -> SeparableOperation:
    op = SeparableOperation(tuple((tuple(np.asarray(a, dtype=complex) for a in ka),
                                   tuple(np.asarray(b, dtype=complex) for b in kb)) for ka, kb in branches))
    if op.completeness_residual() > tol:
        raise ChannelError("separable operation violates Σ_j F_j(1) = 1")
    return op


def local_unitary_operation(ua: np.ndarray, ub: np.ndarray) -> SeparableOperation:
    return separable_operation([([ua], [ub])])


def local_measurement_operation(projections_a: Sequence[np.ndarray], dim_b: int) -> SeparableOperation:
    """Projective measurement on leg A, nothing on leg B."""
    return separable_operation([([p], [np.eye(dim_b)]) for p in projections_a])


def check_square(x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise AlgebraError("expected a square matrix")

"""Finite-dimensional *-algebras of complex matrices, states and tensor calculus.

Every von Neumann algebra in the package is a unital *-subalgebra of
``M_n(C)`` described by an orthonormal (Hilbert-Schmidt) basis of its span.
Rank decisions use singular values below ``RANK_TOL`` times the largest one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

RANK_TOL = 1e-10


class AlgebraError(ValueError):
    """Raised for malformed algebras or inconsistent dimensions."""


# ---------------------------------------------------------------------------
# linear-algebra helpers
# ---------------------------------------------------------------------------

def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def hermitian_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + dagger(x))


def op_norm(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    return float(np.linalg.norm(x, 2))


def svd(a: np.ndarray, full_matrices: bool = True, compute_uv: bool = True):
    """``np.linalg.svd`` with a fallback to LAPACK gesvd when gesdd does not converge."""
    try:
        return np.linalg.svd(a, full_matrices=full_matrices, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=full_matrices, compute_uv=compute_uv, lapack_driver="gesvd")


def trace_norm(x: np.ndarray) -> float:
    return float(np.sum(svd(x, compute_uv=False)))


def _numerical_rank(s: np.ndarray, tol: float = RANK_TOL) -> int:
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def orthonormal_span(mats: Sequence[np.ndarray] | np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Hilbert-Schmidt orthonormal basis, shape (k, n, n), of the span of ``mats``."""
    mats = np.asarray(mats, dtype=complex)
    if mats.ndim != 3:
        raise AlgebraError("expected a stack of square matrices")
    k, n, _ = mats.shape
    flat = mats.reshape(k, n * n)
    _, s, vh = svd(flat, full_matrices=False)
    r = _numerical_rank(s, tol)
    return vh[:r].reshape(r, n, n)


def orthonormal_columns(m: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Greedy Gram-Schmidt on the columns of ``m``.

    Keeps the original column order, so a diagonal projection yields standard
    basis vectors. Used wherever a canonical frame is preferred over an SVD one.
    """
    n = m.shape[0]
    out: list[np.ndarray] = []
    scale = max(np.linalg.norm(m, axis=0).max(initial=0.0), 1.0)
    for j in range(m.shape[1]):
        v = m[:, j].astype(complex)
        for _ in range(2):
            for q in out:
                v = v - q * np.vdot(q, v)
        nv = np.linalg.norm(v)
        if nv > tol * scale:
            out.append(v / nv)
    if not out:
        return np.zeros((n, 0), dtype=complex)
    return np.stack(out, axis=1)


def null_space_stacked(blocks: Sequence[np.ndarray], tol: float = RANK_TOL, scale: float = 0.0) -> np.ndarray:
    """Null space of the vertical stack of ``blocks`` (columns of the result).

    Singular values below ``tol · max(s_max, scale)`` count as zero; ``scale``
    keeps a numerically vanishing system (commutators of a scalar) from
    being ranked against its own roundoff.
    The stack is compressed chunkwise through QR so memory stays O(cols**2).
    """
    cols = blocks[0].shape[1]
    r = np.zeros((0, cols), dtype=complex)
    chunk: list[np.ndarray] = []
    rows = 0
    for b in blocks:
        chunk.append(np.asarray(b, dtype=complex))
        rows += b.shape[0]
        if rows >= 4 * cols:
            r = np.linalg.qr(np.vstack([r] + chunk), mode="r")
            chunk, rows = [], 0
    if chunk:
        r = np.linalg.qr(np.vstack([r] + chunk), mode="r")
    _, s, vh = svd(r, full_matrices=True)
    s_full = np.zeros(cols)
    s_full[: s.size] = s
    top = max(s_full[0] if s_full.size else 0.0, scale)
    mask = s_full <= tol * top if top > 0 else np.ones(cols, dtype=bool)
    return np.conj(vh[mask]).T


def psd_sqrt(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian_part(x))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def psd_power(x: np.ndarray, power: float, cutoff: float = 1e-14) -> np.ndarray:
    """``x**power`` on the support of a PSD matrix (pseudo-inverse for power < 0)."""
    w, v = np.linalg.eigh(hermitian_part(x))
    keep = w > cutoff * max(w.max(initial=0.0), 1e-300)
    wp = np.zeros_like(w)
    wp[keep] = w[keep] ** power
    return (v * wp) @ dagger(v)


def support_projection(x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian_part(x))
    keep = w > tol * max(w.max(initial=0.0), 1e-300)
    q = v[:, keep]
    return q @ dagger(q)


def eta(t):
    """``-t log t`` with ``eta(0) = 0``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = -t[pos] * np.log(t[pos])
    return out if out.ndim else float(out)


def density_entropy(rho: np.ndarray) -> float:
    w = np.linalg.eigvalsh(hermitian_part(rho))
    return float(np.sum(eta(np.clip(w, 0.0, None))))


# ---------------------------------------------------------------------------
# tensor calculus
# ---------------------------------------------------------------------------

def _check_layout(x: np.ndarray, dims: Sequence[int]) -> int:
    total = int(np.prod(dims))
    if x.shape != (total, total):
        raise AlgebraError(f"matrix of shape {x.shape} does not match leg dims {tuple(dims)}")
    return total


def partial_trace(x: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every leg not listed in ``keep`` (legs stay in original order)."""
    dims = list(dims)
    _check_layout(x, dims)
    keep = sorted(keep)
    if any(k < 0 or k >= len(dims) for k in keep):
        raise AlgebraError(f"keep={keep} out of range for {len(dims)} legs")
    n = len(dims)
    t = x.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n: 2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(d, d)


def tensor_embed(x: np.ndarray, dims: Sequence[int], leg: int | Sequence[int]) -> np.ndarray:
    """Embed an operator on the listed (contiguous or not) legs as ``x ⊗ 1``."""
    dims = list(dims)
    legs = [leg] if isinstance(leg, (int, np.integer)) else sorted(leg)
    dl = int(np.prod([dims[i] for i in legs]))
    if x.shape != (dl, dl):
        raise AlgebraError(f"operator of shape {x.shape} does not fit legs {legs} of {dims}")
    rest = [i for i in range(len(dims)) if i not in legs]
    dr = int(np.prod([dims[i] for i in rest])) if rest else 1
    big = np.kron(x, np.eye(dr))
    order = legs + rest
    cur = [dims[i] for i in order]
    t = big.reshape(cur + cur)
    perm = [order.index(i) for i in range(len(dims))]
    n = len(dims)
    t = t.transpose(perm + [p + n for p in perm])
    total = int(np.prod(dims))
    return t.reshape(total, total)


def permute_legs(x: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor legs of an operator: new leg i is old leg ``perm[i]``."""
    dims = list(dims)
    total = _check_layout(x, dims)
    n = len(dims)
    t = x.reshape(dims + dims).transpose(list(perm) + [p + n for p in perm])
    return t.reshape(total, total)


# ---------------------------------------------------------------------------
# algebras
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorDecomposition:
    """Unitary ``W`` with ``W A W* = ⊕_k M_{d_k} ⊗ 1_{m_k}`` and the list of (d_k, m_k)."""

    unitary: np.ndarray
    blocks: tuple[tuple[int, int], ...]

    @property
    def offsets(self) -> list[int]:
        out, o = [], 0
        for d, m in self.blocks:
            out.append(o)
            o += d * m
        return out

    def block_densities(self, x: np.ndarray) -> list[np.ndarray]:
        """Reduced d_k × d_k matrices ``X_k`` with ``Tr(X a) = Σ_k tr(X_k a_k)`` for a in A."""
        y = self.unitary @ x @ dagger(self.unitary)
        out = []
        for (d, m), o in zip(self.blocks, self.offsets):
            yk = y[o: o + d * m, o: o + d * m].reshape(d, m, d, m)
            out.append(np.einsum("iaja->ij", yk))
        return out

    def embed(self, k: int, x: np.ndarray) -> np.ndarray:
        """Ambient matrix acting as ``x ⊗ 1`` on block k and zero elsewhere."""
        d, m = self.blocks[k]
        o = self.offsets[k]
        n = self.unitary.shape[0]
        y = np.zeros((n, n), dtype=complex)
        y[o: o + d * m, o: o + d * m] = np.kron(x, np.eye(m))
        return dagger(self.unitary) @ y @ self.unitary

    def matrix_unit(self, k: int, i: int, j: int) -> np.ndarray:
        d = self.blocks[k][0]
        e = np.zeros((d, d), dtype=complex)
        e[i, j] = 1.0
        return self.embed(k, e)

    def block_coordinates(self, x: np.ndarray) -> list[np.ndarray]:
        """Inverse of :meth:`embed` for algebra elements: the blocks x_k."""
        y = self.unitary @ x @ dagger(self.unitary)
        out = []
        for (d, m), o in zip(self.blocks, self.offsets):
            yk = y[o: o + d * m, o: o + d * m].reshape(d, m, d, m)
            out.append(np.einsum("iaja->ij", yk) / m)
        return out


@dataclass(frozen=True, eq=False)
class MatrixAlgebra:
    """Unital *-algebra spanned by an orthonormal basis of ``ambient_dim``-square matrices."""

    basis: np.ndarray
    generators: np.ndarray | None = field(default=None, repr=False)

    @property
    def ambient_dim(self) -> int:
        return int(self.basis.shape[1])

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    def __repr__(self) -> str:
        return f"MatrixAlgebra(ambient_dim={self.ambient_dim}, dim={self.dim})"

    def project(self, x: np.ndarray) -> np.ndarray:
        """Hilbert-Schmidt orthogonal projection onto the span (trace-preserving)."""
        c = np.einsum("kij,ij->k", np.conj(self.basis), x)
        return np.einsum("k,kij->ij", c, self.basis)

    def residual(self, x: np.ndarray) -> float:
        return op_norm(x - self.project(x))

    def contains(self, x: np.ndarray, tol: float = 1e-10) -> bool:
        return self.residual(x) <= tol * max(1.0, op_norm(x))

    def contains_algebra(self, other: "MatrixAlgebra", tol: float = 1e-10) -> bool:
        return all(self.contains(b, tol) for b in other.basis)

    def same_span(self, other: "MatrixAlgebra", tol: float = 1e-10) -> bool:
        return self.dim == other.dim and self.contains_algebra(other, tol)

    def closure_residual(self) -> float:
        """Largest operator-norm defect of the span under adjoint and products."""
        worst = self.residual(np.eye(self.ambient_dim))
        for b in self.basis:
            worst = max(worst, self.residual(dagger(b)))
        for b in self.basis:
            prods = np.einsum("ij,kjl->kil", b, self.basis)
            for p in prods:
                worst = max(worst, self.residual(p))
        return worst

    def _commuting_generators(self) -> np.ndarray:
        if self.generators is not None:
            return self.generators
        return self.basis

    @cached_property
    def center(self) -> "MatrixAlgebra":
        n, k = self.ambient_dim, self.dim
        blocks = []
        for g in self._commuting_generators():
            comm = np.einsum("kij,jl->kil", self.basis, g) - np.einsum("ij,kjl->kil", g, self.basis)
            blocks.append(comm.reshape(k, n * n).T)
        scale = max(op_norm(g) for g in self._commuting_generators())
        ns = null_space_stacked(blocks, scale=scale)
        elems = np.einsum("ck,cij->kij", ns, self.basis)
        return MatrixAlgebra(orthonormal_span(elems))

    @cached_property
    def prime(self) -> "MatrixAlgebra":
        """Commutant, cached on the instance."""
        return commutant(self)

    def is_factor(self) -> bool:
        return self.center.dim == 1

    @cached_property
    def decomposition(self) -> FactorDecomposition:
        return factor_decomposition(self)

    @property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        return self.decomposition.blocks

    def to_json(self) -> dict:
        return {"ambient_dim": self.ambient_dim, "basis": [matrix_to_json(b) for b in self.basis]}

    @classmethod
    def from_json(cls, data: dict) -> "MatrixAlgebra":
        mats = np.array([matrix_from_json(b) for b in data["basis"]])
        return cls(orthonormal_span(mats))


def _check_square_stack(gens: Sequence[np.ndarray]) -> np.ndarray:
    if len(gens) == 0:
        raise AlgebraError("need at least one generator")
    shapes = {np.shape(g) for g in gens}
    if len(shapes) != 1:
        raise AlgebraError(f"generators have mismatched shapes {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 2 or shape[0] != shape[1]:
        raise AlgebraError(f"generators must be square, got {shape}")
    return np.asarray(gens, dtype=complex)


def generate_algebra(generators: Sequence[np.ndarray]) -> MatrixAlgebra:
    """Smallest unital *-algebra containing ``generators``."""
    gens = _check_square_stack(generators)
    n = gens.shape[1]
    gens = np.concatenate([gens, dagger(gens)])
    gens = orthonormal_span(gens) if len(gens) else gens
    basis = orthonormal_span(np.concatenate([np.eye(n)[None], gens]))
    while True:
        prods = np.einsum("kij,gjl->kgil", basis, gens).reshape(-1, n, n)
        new = orthonormal_span(np.concatenate([basis, prods]))
        if new.shape[0] == basis.shape[0]:
            break
        basis = new
    return MatrixAlgebra(basis, generators=gens)


def full_algebra(n: int) -> MatrixAlgebra:
    units = np.zeros((n * n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            units[i * n + j, i, j] = 1.0
    return MatrixAlgebra(units, generators=units)


def scalars(n: int) -> MatrixAlgebra:
    return MatrixAlgebra(np.eye(n, dtype=complex)[None] / np.sqrt(n))


def leg_algebra(dims: Sequence[int], legs: int | Sequence[int]) -> MatrixAlgebra:
    """``B(H_legs) ⊗ 1`` inside ``B(H_1 ⊗ ... ⊗ H_r)``."""
    legs = [legs] if isinstance(legs, (int, np.integer)) else list(legs)
    d = int(np.prod([dims[i] for i in legs]))
    units = full_algebra(d).basis
    emb = np.array([tensor_embed(u, dims, legs) for u in units])
    return MatrixAlgebra(orthonormal_span(emb), generators=emb)


def commutant(a: MatrixAlgebra) -> MatrixAlgebra:
    """All matrices commuting with ``a``, from the null space of ``x ↦ [x, g]``."""
    n = a.ambient_dim
    eye = np.eye(n)
    gens = a._commuting_generators()
    blocks = [np.kron(eye, g.T) - np.kron(g, eye) for g in gens]
    ns = null_space_stacked(blocks, scale=max(op_norm(g) for g in gens))
    mats = ns.T.reshape(-1, n, n)
    basis = orthonormal_span(mats)
    return MatrixAlgebra(basis, generators=basis)


def join(*algebras: MatrixAlgebra) -> MatrixAlgebra:
    gens = np.concatenate([a._commuting_generators() for a in algebras])
    return generate_algebra(list(gens))


def intersection(a: MatrixAlgebra, b: MatrixAlgebra) -> MatrixAlgebra:
    """Span intersection; for *-algebras the result is again a *-algebra."""
    n = a.ambient_dim
    fa = a.basis.reshape(a.dim, n * n).T
    fb = b.basis.reshape(b.dim, n * n).T
    ns = null_space_stacked([np.hstack([fa, -fb])])
    elems = (fa @ ns[: a.dim]).T.reshape(-1, n, n)
    return MatrixAlgebra(orthonormal_span(elems))


def conjugate_algebra(a: MatrixAlgebra, u: np.ndarray) -> MatrixAlgebra:
    """``u a u*`` for a unitary ``u``."""
    basis = np.einsum("ij,kjl,lm->kim", u, a.basis, dagger(u))
    return MatrixAlgebra(basis, generators=basis)


# ---------------------------------------------------------------------------
# Wedderburn decomposition
# ---------------------------------------------------------------------------

def _eigen_clusters(h: np.ndarray, tol: float = 1e-8):
    w, v = np.linalg.eigh(h)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol * scale:
            groups.append(v[:, start:i])
            start = i
    return groups


def _central_projections(a: MatrixAlgebra) -> list[np.ndarray]:
    z = a.center
    n = a.ambient_dim
    if z.dim == 1:
        return [np.eye(n, dtype=complex)]
    rng = np.random.default_rng(20240611)
    for _ in range(10):
        c = rng.normal(size=z.dim) + 1j * rng.normal(size=z.dim)
        h = hermitian_part(np.einsum("k,kij->ij", c, z.basis))
        groups = _eigen_clusters(h)
        if len(groups) == z.dim:
            return [orthonormal_columns(g @ dagger(g)) for g in groups]
    raise AlgebraError("could not separate the minimal central projections")


def _block_matrix_units(alg: np.ndarray, r: int, rng) -> tuple[int, list[np.ndarray], np.ndarray]:
    """For a factor ``alg`` (orthonormal basis on C^r) return d, [e_i1], basis of e_11 C^r."""
    k = alg.shape[0]
    d = int(round(np.sqrt(k)))
    if d * d != k or r % d:
        raise AlgebraError("block is not a full matrix factor; input is not a *-algebra")
    m = r // d

    def proj(x):
        c = np.einsum("kij,ij->k", np.conj(alg), x)
        return np.einsum("k,kij->ij", c, alg)

    candidates = [hermitian_part(proj(np.diag(np.arange(1.0, r + 1.0))))]
    for _ in range(10):
        c = rng.normal(size=k) + 1j * rng.normal(size=k)
        candidates.append(hermitian_part(np.einsum("k,kij->ij", c, alg)))
    for h in candidates:
        groups = _eigen_clusters(h)
        if len(groups) == d and all(g.shape[1] == m for g in groups):
            break
    else:
        raise AlgebraError("failed to find minimal projections")
    projs = [g @ dagger(g) for g in groups]
    e11 = projs[0]
    units = [e11]
    ys = [proj(np.ones((r, r), dtype=complex))]
    for _ in range(10):
        c = rng.normal(size=k) + 1j * rng.normal(size=k)
        ys.append(np.einsum("k,kij->ij", c, alg))
    for i in range(1, d):
        for y in ys:
            x = projs[i] @ y @ e11
            c = np.real(np.trace(dagger(x) @ x)) / m
            if c > 1e-8:
                units.append(x / np.sqrt(c))
                break
        else:
            raise AlgebraError("failed to build matrix units")
    frame = orthonormal_columns(e11)
    return d, units, frame


def factor_decomposition(a: MatrixAlgebra) -> FactorDecomposition:
    """Unitary ``W`` bringing ``a`` to ``⊕ M_{d_k} ⊗ 1_{m_k}``.

    For ``M_d ⊗ 1`` in the standard product basis ``W`` is the identity.
    """
    n = a.ambient_dim
    rng = np.random.default_rng(7)
    rows, blocks = [], []
    for q in _central_projections(a):
        r = q.shape[1]
        comp = np.einsum("ia,kij,jb->kab", np.conj(q), a.basis, q)
        comp = orthonormal_span(comp)
        d, units, frame = _block_matrix_units(comp, r, rng)
        m = frame.shape[1]
        for i in range(d):
            for s in range(m):
                rows.append(q @ (units[i] @ frame[:, s]))
        blocks.append((d, m))
    w = np.conj(np.array(rows))
    if w.shape != (n, n):
        raise AlgebraError("decomposition does not exhaust the ambient space")
    return FactorDecomposition(w, tuple(blocks))


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateFunctional:
    """Linear functional ``x ↦ Tr(density · x)``; restricted to ``algebra`` when given.

    The density is kept as an ambient matrix; on a subalgebra only its
    projection onto the algebra matters.
    """

    density: np.ndarray
    algebra: MatrixAlgebra | None = None

    def __call__(self, x: np.ndarray) -> complex:
        return complex(np.trace(self.density @ x))

    @property
    def dim(self) -> int:
        return int(self.density.shape[0])

    def block_densities(self) -> list[np.ndarray]:
        if self.algebra is None:
            return [self.density]
        return self.algebra.decomposition.block_densities(self.density)

    @property
    def norm(self) -> float:
        """Dual (functional) norm: sum of trace norms of the block densities."""
        return float(sum(trace_norm(x) for x in self.block_densities()))

    @property
    def value_at_one(self) -> float:
        return float(np.real(np.trace(self.density)))

    def is_positive(self, tol: float = 1e-12) -> bool:
        return all(np.linalg.eigvalsh(hermitian_part(x)).min() >= -tol for x in self.block_densities())

    def restrict(self, algebra: MatrixAlgebra) -> "StateFunctional":
        return StateFunctional(algebra.project(self.density), algebra)

    def scaled(self, c: float) -> "StateFunctional":
        return StateFunctional(c * self.density, self.algebra)

    def to_json(self) -> dict:
        return {"density": matrix_to_json(self.density)}

    @classmethod
    def from_json(cls, data: dict) -> "StateFunctional":
        return cls(matrix_from_json(data["density"]))


@dataclass(frozen=True, eq=False)
class VectorState:
    vector: np.ndarray

    def __call__(self, x: np.ndarray) -> complex:
        return complex(np.vdot(self.vector, x @ self.vector))

    def functional(self, algebra: MatrixAlgebra | None = None) -> StateFunctional:
        v = self.vector
        return StateFunctional(np.outer(v, np.conj(v)), algebra)

    def is_cyclic(self, a: MatrixAlgebra) -> bool:
        vecs = np.einsum("kij,j->ik", a.basis, self.vector)
        s = svd(vecs, compute_uv=False)
        return _numerical_rank(s) == a.ambient_dim

    def is_separating(self, a: MatrixAlgebra) -> bool:
        return self.is_cyclic(a.prime)

    def is_standard(self, a: MatrixAlgebra) -> bool:
        return self.is_cyclic(a) and self.is_separating(a)


# ---------------------------------------------------------------------------
# serialization (row-major [re, im] pairs)
# ---------------------------------------------------------------------------

def matrix_to_json(x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=complex)
    return {"shape": list(x.shape), "data": [[float(z.real), float(z.imag)] for z in x.ravel()]}


def matrix_from_json(data: dict) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in data["shape"])
        flat = np.array([complex(re, im) for re, im in data["data"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise AlgebraError(f"malformed matrix record: {exc}") from exc
    if flat.size != int(np.prod(shape)):
        raise AlgebraError("matrix record size does not match shape")
    return flat.reshape(shape)


def dumps_matrix(x: np.ndarray) -> str:
    return json.dumps(matrix_to_json(x))


# ---------------------------------------------------------------------------
# random objects
# ---------------------------------------------------------------------------

def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    k = n if rank is None else rank
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_pure(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class SeparableState:
    """Positive functional ``Σ_j w_j ρ_j^A ⊗ ρ_j^B`` with unit-trace PSD factors."""

    terms: tuple[tuple[float, np.ndarray, np.ndarray], ...]
    dims: tuple[int, int]

    def __post_init__(self):
        da, db = self.dims
        for w, ra, rb in self.terms:
            if w < 0 or ra.shape != (da, da) or rb.shape != (db, db):
                raise AlgebraError("separable term has negative weight or wrong leg shape")

    @property
    def norm(self) -> float:
        return float(sum(w for w, _, _ in self.terms))

    def density(self) -> np.ndarray:
        da, db = self.dims
        out = np.zeros((da * db, da * db), dtype=complex)
        for w, ra, rb in self.terms:
            out += w * np.kron(ra, rb)
        return out

    def normalized(self) -> "SeparableState":
        z = self.norm
        return SeparableState(tuple((w / z, a, b) for w, a, b in self.terms), self.dims)

    def swapped(self) -> "SeparableState":
        return SeparableState(tuple((w, b, a) for w, a, b in self.terms), self.dims[::-1])

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "terms": [{"weight": float(w), "a": matrix_to_json(a), "b": matrix_to_json(b)} for w, a, b in self.terms],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SeparableState":
        terms = tuple((float(t["weight"]), matrix_from_json(t["a"]), matrix_from_json(t["b"])) for t in data["terms"])
        return cls(terms, tuple(data["dims"]))

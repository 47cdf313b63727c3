"""Modular theory for matrix algebras with a vector state.

Antilinear maps are stored as a matrix ``U`` acting by ``v ↦ U conj(v)``.
The Tomita operator ``S: xξ ↦ x*η`` is computed from an algebra basis and
its polar decomposition gives Δ and J; nothing relies on closed-form
density identifications.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import CpMap
from .core import (
    AlgebraError,
    MatrixAlgebra,
    StateFunctional,
    VectorState,
    _numerical_rank,
    dagger,
    hermitian_part,
    join,
    op_norm,
    psd_power,
    svd,
)

SUPPORT_TOL = 1e-10
# orbit singular values scale like √λ for density eigenvalues λ: 1e-6 drops λ below ~1e-12
ORBIT_TOL = 1e-6


class StandardFormError(AlgebraError):
    pass


def _orbit(a: MatrixAlgebra, v: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Columns ``x_k v`` (or ``x_k* v``) over the algebra basis."""
    mats = dagger(a.basis) if adjoint else a.basis
    return np.einsum("kij,j->ik", mats, v)


def _range_projection(m: np.ndarray, tol: float = SUPPORT_TOL) -> np.ndarray:
    u, s, _ = svd(m, full_matrices=False)
    r = _numerical_rank(s, tol)
    q = u[:, :r]
    return q @ dagger(q)


def antilinear_apply(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u @ np.conj(v)


def conjugate_by(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``J x J`` for ``J = U∘conj``."""
    return u @ np.conj(x) @ dagger(u)


@dataclass(frozen=True, eq=False)
class RelativeModular:
    """Polar data of ``S_{η,ξ}: xξ + ζ ↦ s(φ) x* η`` (ζ ⊥ Mξ)."""

    delta_rel: np.ndarray
    j_unitary: np.ndarray
    support_phi: np.ndarray
    support_psi: np.ndarray
    xi: np.ndarray
    tomita: np.ndarray | None = None

    @property
    def support_ok(self) -> bool:
        """True when ``s(φ) ≤ s(ψ)``."""
        n = self.support_phi.shape[0]
        return op_norm((np.eye(n) - self.support_psi) @ self.support_phi) <= 1e-8

    def spectral_family(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues of Δ_{η,ξ} and the spectral weights ``|(e_k|ξ)|²``."""
        if self.tomita is None:
            lam, vec = np.linalg.eigh(hermitian_part(self.delta_rel))
            w = np.abs(dagger(vec) @ self.xi) ** 2
            return np.clip(lam, 0.0, None), w
        # Δ = conj(K*K): squared singular values of K, eigenvectors the rows of Vh.
        # The SVD keeps small eigenvalues accurate when Δ itself is badly scaled.
        _, sv, vh = svd(self.tomita)
        lam = np.zeros(vh.shape[0])
        lam[: sv.size] = sv ** 2
        w = np.abs(np.conj(vh) @ self.xi) ** 2
        return lam, w

    def entropy(self) -> float:
        """``−(ξ | log Δ_{η,ξ} ξ)``: split into the spectral parts below and above 1."""
        if not self.support_ok:
            return float("inf")
        lam, w = self.spectral_family()
        scale = max(lam.max(initial=0.0), 1.0)
        zero = lam <= SUPPORT_TOL * scale
        if w[zero].sum() > 1e-10 * max(w.sum(), 1e-300):
            return float("inf")
        lam, w = lam[~zero], w[~zero]
        low, high = lam < 1.0, lam >= 1.0
        part_low = -float(np.sum(w[low] * np.log(lam[low])))
        part_high = -float(np.sum(w[high] * np.log(lam[high])))
        return part_low + part_high

    def power(self, z: complex) -> np.ndarray:
        lam, vec = np.linalg.eigh(hermitian_part(self.delta_rel))
        keep = lam > SUPPORT_TOL * max(lam.max(initial=0.0), 1.0)
        vals = np.zeros(lam.shape, dtype=complex)
        vals[keep] = np.exp(z * np.log(lam[keep]))
        return (vec * vals) @ dagger(vec)


def relative_modular(xi, eta, m: MatrixAlgebra) -> RelativeModular:
    """Relative modular operator Δ_{η,ξ} for φ = ω_ξ, ψ = ω_η on ``m``."""
    xi = np.asarray(getattr(xi, "vector", xi), dtype=complex)
    eta = np.asarray(getattr(eta, "vector", eta), dtype=complex)
    if np.linalg.norm(xi) == 0 or np.linalg.norm(eta) == 0:
        raise StandardFormError("relative modular operator needs nonzero vectors")
    mp = m.prime
    v = _orbit(m, xi)
    w = _orbit(m, eta, adjoint=True)
    p_phi = _range_projection(_orbit(mp, xi), ORBIT_TOL)
    p_psi = p_phi if eta is xi or np.array_equal(eta, xi) else _range_projection(_orbit(mp, eta), ORBIT_TOL)
    k = p_phi @ w @ np.conj(np.linalg.pinv(v, rcond=ORBIT_TOL))
    delta = np.conj(dagger(k) @ k)
    delta = hermitian_part(delta)
    j = k @ np.conj(psd_power(delta, -0.5, cutoff=1e-13))
    return RelativeModular(delta, j, p_phi, p_psi, xi, k)


@dataclass(frozen=True, eq=False)
class StandardFormData:
    algebra: MatrixAlgebra
    omega: VectorState
    delta: np.ndarray
    j_unitary: np.ndarray

    def J(self, v: np.ndarray) -> np.ndarray:
        return antilinear_apply(self.j_unitary, v)

    def conjugate(self, x: np.ndarray) -> np.ndarray:
        """``J x J``."""
        return conjugate_by(self.j_unitary, x)

    def delta_power(self, z: complex) -> np.ndarray:
        lam, vec = np.linalg.eigh(hermitian_part(self.delta))
        return (vec * np.exp(z * np.log(lam))) @ dagger(vec)

    def flow(self, x: np.ndarray, t: float) -> np.ndarray:
        """Modular automorphism ``Δ^{it} x Δ^{-it}``."""
        u = self.delta_power(1j * t)
        return u @ x @ dagger(u)

    def tomita(self, v: np.ndarray) -> np.ndarray:
        """``S v = J Δ^{1/2} v``."""
        return self.J(self.delta_power(0.5) @ v)

    def cone_coefficients(self, v: np.ndarray) -> np.ndarray:
        """Algebra element ``a`` with ``Δ^{-1/4} v = aΩ``."""
        y = self.delta_power(-0.25) @ v
        c = np.linalg.lstsq(_orbit(self.algebra, self.omega.vector), y, rcond=None)[0]
        return np.einsum("k,kij->ij", c, self.algebra.basis)

    def in_natural_cone(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        """Membership in ``Δ^{1/4} M_+ Ω``."""
        a = self.cone_coefficients(v)
        scale = max(op_norm(a), 1.0)
        if op_norm(a - dagger(a)) > tol * scale:
            return False
        return float(np.linalg.eigvalsh(hermitian_part(a)).min()) >= -tol * scale

    def residuals(self) -> dict[str, float]:
        """Defects of the defining identities on the algebra basis."""
        om = self.omega.vector
        n = len(om)
        s_res = max(np.linalg.norm(self.tomita(x @ om) - dagger(x) @ om) for x in self.algebra.basis)
        dinv = self.delta_power(-1.0)
        jdj = self.j_unitary @ np.conj(self.delta) @ dagger(self.j_unitary)
        jj = self.j_unitary @ np.conj(self.j_unitary) - np.eye(n)
        return {"tomita": float(s_res), "j_delta_j": op_norm(jdj - dinv), "j_involution": op_norm(jj)}


def standard_form(m: MatrixAlgebra, omega) -> StandardFormData:
    vs = omega if isinstance(omega, VectorState) else VectorState(np.asarray(omega, dtype=complex))
    if not vs.is_cyclic(m):
        raise StandardFormError("vector is not cyclic for the algebra")
    if not vs.is_separating(m):
        raise StandardFormError("vector is not separating for the algebra (not cyclic for the commutant)")
    rel = relative_modular(vs.vector, vs.vector, m)
    return StandardFormData(m, vs, rel.delta_rel, rel.j_unitary)


def kms_residual(sfd: StandardFormData, x: np.ndarray, y: np.ndarray, t: float) -> float:
    """|F(t − i) − G(t)| with ``F(t) = (Ω|x σ_t(y) Ω)``, ``G(t) = (Ω|σ_t(y) x Ω)``.

    ``σ_t = Ad Δ^{it}`` and F is continued analytically through matrix powers.
    """
    om = sfd.omega.vector
    z = t - 1j
    f = np.vdot(om, x @ sfd.delta_power(1j * z) @ y @ sfd.delta_power(-1j * z) @ om)
    g = np.vdot(om, sfd.flow(y, t) @ x @ om)
    return float(abs(f - g))


# ---------------------------------------------------------------------------
# cocycles
# ---------------------------------------------------------------------------

def _block_power(rhos: Sequence[np.ndarray], z: complex) -> list[np.ndarray]:
    out = []
    for r in rhos:
        lam, vec = np.linalg.eigh(hermitian_part(r))
        if lam.min() <= 0:
            raise StandardFormError("cocycle requires faithful functionals")
        out.append((vec * np.exp(z * np.log(lam))) @ dagger(vec))
    return out


def connes_cocycle(phi: StateFunctional, psi: StateFunctional, t: float, m: MatrixAlgebra | None = None) -> np.ndarray:
    """``(Dφ:Dψ)_t = ⊕_k ρ_k^{it} σ_k^{-it}`` as an ambient matrix in ``m``."""
    m = m or phi.algebra or psi.algebra
    if m is None:
        a, b = _block_power([phi.density], 1j * t)[0], _block_power([psi.density], -1j * t)[0]
        return a @ b
    dec = m.decomposition
    pa = _block_power(dec.block_densities(phi.density), 1j * t)
    pb = _block_power(dec.block_densities(psi.density), -1j * t)
    return sum(dec.embed(k, a @ b) for k, (a, b) in enumerate(zip(pa, pb)))


# ---------------------------------------------------------------------------
# split pairs
# ---------------------------------------------------------------------------

def _check_commuting(a: MatrixAlgebra, b: MatrixAlgebra, tol: float = 1e-10) -> None:
    worst = max(op_norm(x @ y - y @ x) for x in a.basis for y in b.basis)
    if worst > tol:
        raise AlgebraError(f"algebras do not commute (residual {worst:.2e})")


def canonical_type_I_factor(a: MatrixAlgebra, b: MatrixAlgebra, omega) -> MatrixAlgebra:
    """``F = A ∨ J A J`` with J the modular conjugation of ``(A ∨ B, Ω)``."""
    _check_commuting(a, b)
    if b.prime.same_span(a):
        return a
    sfd = standard_form(join(a, b), omega)
    jaj = [sfd.conjugate(x) for x in a.basis]
    f = join(a, MatrixAlgebra(np.array(jaj)))
    if not f.contains_algebra(a, 1e-8) or not b.prime.contains_algebra(f, 1e-8):
        raise AlgebraError("A ⊆ F ⊆ B' fails for the constructed factor")
    if not f.is_factor():
        raise AlgebraError("A ∨ JAJ is not a factor; the pair is not split in standard form")
    return f


@dataclass(frozen=True, eq=False)
class CanonicalImplementation:
    unitary: np.ndarray
    dims: tuple[int, int]
    xi: np.ndarray
    j_residual: float

    def tensor_image(self, x: np.ndarray) -> np.ndarray:
        return self.unitary @ x @ dagger(self.unitary)


def _tensor_conjugation(da: int, db: int) -> np.ndarray:
    """Matrix ``C`` with ``(J_A⊗J_B)Ψ = C conj(Ψ)`` on legs (a, a', b, b')."""
    n = da * da * db * db
    idx = np.arange(n).reshape(da, da, db, db)
    perm = idx.transpose(1, 0, 3, 2).ravel()
    c = np.zeros((n, n))
    c[np.arange(n), perm] = 1.0
    return c


def _leg_unit(d: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def canonical_implementation(a: MatrixAlgebra, b: MatrixAlgebra, omega) -> CanonicalImplementation:
    """Unitary ``U: H → (C^dA ⊗ C^dA) ⊗ (C^dB ⊗ C^dB)`` with ``U ab U* = (a ⊗ 1) ⊗ (b ⊗ 1)``.

    U carries Ω to the cone vector of ω|_{A∨B} in the doubled tensor
    representation, hence natural cone to natural cone.
    """
    _check_commuting(a, b)
    if not (a.is_factor() and b.is_factor()):
        raise AlgebraError("canonical implementation needs factors")
    vs = omega if isinstance(omega, VectorState) else VectorState(np.asarray(omega, dtype=complex))
    ab = join(a, b)
    sfd = standard_form(ab, vs)
    da, db = a.blocks[0][0], b.blocks[0][0]
    n = ab.ambient_dim
    if da * da * db * db != n:
        raise StandardFormError("ambient dimension incompatible with a standard tensor split")
    da_dec, db_dec = a.decomposition, b.decomposition
    units = [(i, j, k, l) for i in range(da) for j in range(da) for k in range(db) for l in range(db)]
    om = vs.vector
    rho = np.zeros((da * db, da * db), dtype=complex)
    cols_v = []
    for i, j, k, l in units:
        x = da_dec.matrix_unit(0, i, j) @ db_dec.matrix_unit(0, k, l)
        cols_v.append(x @ om)
        rho[j * db + l, i * db + k] = np.vdot(om, x @ om)
    rho = hermitian_part(rho)
    xi = psd_power(rho, 0.5, cutoff=0.0).reshape(da, db, da, db).transpose(0, 2, 1, 3).ravel()
    cols_p = []
    for i, j, k, l in units:
        pi = np.kron(np.kron(_leg_unit(da, i, j), np.eye(da)), np.kron(_leg_unit(db, k, l), np.eye(db)))
        cols_p.append(pi @ xi)
    v = np.array(cols_v).T
    p = np.array(cols_p).T
    u = p @ np.linalg.inv(v)
    target = _tensor_conjugation(da, db)
    res = op_norm(u @ sfd.j_unitary @ u.T - target)
    return CanonicalImplementation(u, (da, db), xi, res)


# ---------------------------------------------------------------------------
# conditional expectations
# ---------------------------------------------------------------------------

def generalized_conditional_expectation(f: MatrixAlgebra, a: MatrixAlgebra, omega: StateFunctional) -> CpMap:
    """ω-preserving unital cp map ``ε: F → A``.

    ε is the adjoint of ``A ↪ F`` for the symmetric pairing
    ``⟨x, y⟩ = ω-trace(ρ^{1/2} x* ρ^{1/2} y)``:
    ``ε(x) = ρ_A^{-1/2} P_A(ρ_F^{1/2} x ρ_F^{1/2}) ρ_A^{-1/2}``, with ρ_F, ρ_A
    the density representatives inside F and A and P_A the trace-preserving
    projection onto A.
    """
    if not f.contains_algebra(a, 1e-8):
        raise AlgebraError("A is not contained in F")
    rho_f = hermitian_part(f.project(omega.density))
    rho_a = hermitian_part(a.project(omega.density))
    if np.linalg.eigvalsh(rho_f).min() <= 1e-13:
        raise StandardFormError("state is not faithful on F")
    sf = psd_power(rho_f, 0.5, cutoff=0.0)
    ia = psd_power(rho_a, -0.5, cutoff=0.0)

    def eps(x):
        return ia @ a.project(sf @ x @ sf) @ ia

    return CpMap.from_function(eps, f.ambient_dim)


def generalized_expectation_pair(f: MatrixAlgebra, a: MatrixAlgebra, omega: StateFunctional):
    """The same map and its predual as plain callables (no Choi matrix).

    ``dual(X) = ρ_F^{1/2} P_A(ρ_A^{-1/2} X ρ_A^{-1/2}) ρ_F^{1/2}`` satisfies
    ``Tr(X ε(x)) = Tr(dual(X) x)`` for X representing a functional on A.
    """
    rho_f = hermitian_part(f.project(omega.density))
    rho_a = hermitian_part(a.project(omega.density))
    sf = psd_power(rho_f, 0.5, cutoff=0.0)
    ia = psd_power(rho_a, -0.5, cutoff=0.0)

    def eps(x):
        return ia @ a.project(sf @ x @ sf) @ ia

    def dual(x):
        return sf @ a.project(ia @ x @ ia) @ sf

    return eps, dual


def modular_spectrum(sfd: StandardFormData) -> np.ndarray:
    return np.sort(np.linalg.eigvalsh(hermitian_part(sfd.delta)))


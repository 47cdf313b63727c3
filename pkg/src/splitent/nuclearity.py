"""Nuclear p-norm upper bounds for the modular maps of a split pair.

``Ξ_B(a) = Δ_{B'}^{1/4} a Ω`` on A (and ``Ξ_A`` symmetrically) is stored as
the matrix whose columns are the images of the matrix units of A. A
decomposition ``Ξ(a) = Σ_k e_k(a) f_k`` is any factorization of that matrix;
``‖e_k‖`` is the trace norm of its coefficient matrix because A carries the
operator norm. Every decomposition certifies ``‖Ξ‖_p ≤ μ_p^{1/p}``.

In finite dimension Ω cannot be separating for ``B'``; Δ_{B'} is the
relative modular operator restricted to its support, which keeps the
identity ``ω(ab) = ((Δ^{1/4}+Δ^{-1/4})^{-1}(b* + JbJ)Ω | Ξ_B(a))`` intact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .core import (
    AlgebraError,
    MatrixAlgebra,
    SeparableState,
    StateFunctional,
    dagger,
    eta,
    hermitian_part,
    join,
    op_norm,
    trace_norm,
    svd,
)
from .entanglement import canonical_entanglement_entropy, relative_entanglement_entropy_upper
from .entropy import von_neumann_entropy
from .instances import SplitTriple
from .modular import generalized_expectation_pair, relative_modular, standard_form


def c_p(p: float) -> float:
    """``1 / ((1 − p) e)``, the constant in ``η(t) ≤ c_p t^p`` on [0, 1]."""
    return 1.0 / ((1.0 - p) * np.e)


def schatten_p_norm(t: np.ndarray, p: float) -> float:
    if p <= 0:
        raise ValueError("p must be positive")
    s = svd(np.atleast_2d(t), compute_uv=False)
    return float(np.sum(s ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# modular maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class XiMap:
    """Linear map from a factor (operator norm) into the ambient Hilbert space."""

    matrix: np.ndarray  # columns: images of the matrix units e_ij, index i*d + j
    source: MatrixAlgebra
    delta: np.ndarray
    j_unitary: np.ndarray

    @property
    def factor_dim(self) -> int:
        return self.source.blocks[0][0]

    def coordinates(self, x: np.ndarray) -> np.ndarray:
        return self.source.decomposition.block_coordinates(x)[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ self.coordinates(x).ravel()


def _quarter_power(delta: np.ndarray, z: float) -> np.ndarray:
    lam, vec = np.linalg.eigh(hermitian_part(delta))
    keep = lam > 1e-10 * max(lam.max(), 1.0)
    vals = np.zeros_like(lam)
    vals[keep] = lam[keep] ** z
    return (vec * vals) @ dagger(vec)


def xi_map(source: MatrixAlgebra, other: MatrixAlgebra, omega: np.ndarray) -> XiMap:
    """``x ↦ Δ_{other'}^{1/4} x Ω`` on the factor ``source``."""
    if not source.is_factor():
        raise AlgebraError("the source algebra of Ξ must be a factor")
    rel = relative_modular(omega, omega, other.prime)
    q = _quarter_power(rel.delta_rel, 0.25)
    dec = source.decomposition
    d = source.blocks[0][0]
    cols = [q @ dec.matrix_unit(0, i, j) @ omega for i in range(d) for j in range(d)]
    return XiMap(np.array(cols).T, source, rel.delta_rel, rel.j_unitary)


def xi_maps(a: MatrixAlgebra, b: MatrixAlgebra, omega) -> tuple[XiMap, XiMap]:
    """``(Ξ_A, Ξ_B)`` with ``Ξ_A(b) = Δ_{A'}^{1/4} bΩ`` and ``Ξ_B(a) = Δ_{B'}^{1/4} aΩ``."""
    v = np.asarray(getattr(omega, "vector", omega), dtype=complex)
    standard_form(join(a, b), v)
    return xi_map(b, a, v), xi_map(a, b, v)


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------

@dataclass
class NuclearDecomposition:
    """``Θ(x) = Σ_k tr(C_k x_c) f_k`` with x_c the factor coordinates of x."""

    functionals: list[np.ndarray]
    vectors: np.ndarray
    p: float
    history: list[float] = field(default_factory=list)

    @property
    def functional_norms(self) -> np.ndarray:
        return np.array([trace_norm(c) for c in self.functionals])

    @property
    def vector_norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=0) if self.vectors.size else np.zeros(0)

    @property
    def mu_p(self) -> float:
        return float(np.sum((self.functional_norms * self.vector_norms) ** self.p))

    @property
    def nu_hat(self) -> float:
        return self.mu_p ** (1.0 / self.p) if self.functionals else 0.0

    def apply(self, xc: np.ndarray) -> np.ndarray:
        coeff = np.array([np.trace(c @ xc) for c in self.functionals])
        return self.vectors @ coeff if coeff.size else np.zeros(self.vectors.shape[0], dtype=complex)

    def reconstruction_residual(self, xi: XiMap, rng, samples: int = 20) -> float:
        """Sup of ``‖Ξ(x) − Σ e_k(x) f_k‖`` over matrix units and random contractions."""
        d = xi.factor_dim
        tests = []
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1
                tests.append(e)
        for _ in range(samples):
            z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            tests.append(z / op_norm(z))
        return max(float(np.linalg.norm(xi.matrix @ x.ravel() - self.apply(x))) for x in tests)


# columns below this fraction of the largest are roundoff; with p < 1 they would still inflate μ_p
COLUMN_TOL = 1e-13


def _live_columns(f: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(f, axis=0)
    return norms > COLUMN_TOL * norms.max(initial=0.0)


def _decomposition_from_factor(m: np.ndarray, g: np.ndarray, d: int, p: float) -> NuclearDecomposition:
    """``M = (M G)(G^{-1})`` with G unitary: row k of G* gives functional k."""
    f = m @ g
    rows = dagger(g)
    funcs = [rows[k].reshape(d, d).T for k in range(rows.shape[0])]
    live = _live_columns(f)
    keep = [k for k in range(len(funcs)) if live[k] and trace_norm(funcs[k]) > 0]
    return NuclearDecomposition([funcs[k] for k in keep], f[:, keep], p)


def _mu_of_rotation(m: np.ndarray, g: np.ndarray, d: int, p: float) -> float:
    f = m @ g
    rows = dagger(g)
    norms_f = np.where(_live_columns(f), np.linalg.norm(f, axis=0), 0.0)
    norms_e = np.array([np.sum(svd(rows[k].reshape(d, d), compute_uv=False)) for k in range(rows.shape[0])])
    return float(np.sum((norms_f * norms_e) ** p))


def p_norm_upper(xi: XiMap, p: float, scheme: str = "refined", iterations: int = 300, rng=None) -> NuclearDecomposition:
    """Certified upper bound ``ν̂_p = μ_p^{1/p}`` on ``‖Ξ‖_p`` with its decomposition.

    ``coordinate``: matrix-unit functionals (norm 1) times ``Ξ(e_ij)``.
    ``svd``: singular vectors of the coordinate matrix.
    ``refined``: best of the two, then unitary mixing of the factorization
    with monotone acceptance (μ_p never increases; ``history`` records it).
    """
    m = xi.matrix
    d = xi.factor_dim
    if not np.any(m):
        return NuclearDecomposition([], np.zeros((m.shape[0], 0), dtype=complex), p, [0.0])
    k = d * d
    g_coord = np.eye(k, dtype=complex)
    _, _, vh = svd(m, full_matrices=True)
    g_svd = dagger(vh)
    if scheme == "coordinate":
        return _decomposition_from_factor(m, g_coord, d, p)
    if scheme == "svd":
        return _decomposition_from_factor(m, g_svd, d, p)
    if scheme != "refined":
        raise ValueError(f"unknown scheme {scheme!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    cands = [(g, _mu_of_rotation(m, g, d, p)) for g in (g_coord, g_svd)]
    g, mu = min(cands, key=lambda t: t[1])
    history = [mu]
    step = 0.3
    for _ in range(iterations):
        h = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        h = (h + dagger(h)) / 2
        trial = g @ expm(1j * step * h / max(op_norm(h), 1e-300))
        mu_t = _mu_of_rotation(m, trial, d, p)
        if mu_t < mu:
            g, mu = trial, mu_t
            step = min(step * 1.2, 1.0)
        else:
            step = max(step * 0.9, 1e-4)
        history.append(mu)
    dec = _decomposition_from_factor(m, g, d, p)
    dec.history = history
    return dec


# ---------------------------------------------------------------------------
# Lemma-3 / Lemma-4 constructions
# ---------------------------------------------------------------------------

def joint_density(a: MatrixAlgebra, b: MatrixAlgebra, omega: np.ndarray) -> np.ndarray:
    """Density of ω on ``A ∨ B ≅ M_dA ⊗ M_dB``: ``ρ[(j,l),(i,k)] = ω(e^A_ij e^B_kl)``."""
    da, db = a.blocks[0][0], b.blocks[0][0]
    dec_a, dec_b = a.decomposition, b.decomposition
    rho = np.zeros((da * db, da * db), dtype=complex)
    for i in range(da):
        for j in range(da):
            av = dec_a.matrix_unit(0, i, j)
            for k in range(db):
                for l in range(db):
                    x = av @ dec_b.matrix_unit(0, k, l)
                    rho[j * db + l, i * db + k] = np.vdot(omega, x @ omega)
    return hermitian_part(rho)


@dataclass
class SeparableSplitting:
    """``ω(ab) = Σ_j φ_j(a) ψ_j(b)`` with coordinate densities ``φ_j(a) = tr(C_j a_c)``."""

    phis: list[np.ndarray]
    psis: list[np.ndarray]
    xi_norms: np.ndarray
    residual: float
    p: float

    @property
    def phi_norms(self) -> np.ndarray:
        return np.array([trace_norm(c) for c in self.phis])

    @property
    def psi_norms(self) -> np.ndarray:
        return np.array([trace_norm(c) for c in self.psis])

    @property
    def mu_p(self) -> float:
        return float(np.sum((self.phi_norms * self.psi_norms) ** self.p))

    def swapped(self) -> "SeparableSplitting":
        return SeparableSplitting(self.psis, self.phis, self.xi_norms, self.residual, self.p)


def _splitting_residual(a, b, omega, phis, psis) -> float:
    dec_a, dec_b = a.decomposition, b.decomposition
    da, db = a.blocks[0][0], b.blocks[0][0]
    worst = 0.0
    for i in range(da):
        for j in range(da):
            ea = np.zeros((da, da))
            ea[i, j] = 1
            av = dec_a.matrix_unit(0, i, j)
            fa = np.array([np.trace(c @ ea) for c in phis])
            for k in range(db):
                for l in range(db):
                    eb = np.zeros((db, db))
                    eb[k, l] = 1
                    lhs = np.vdot(omega, av @ dec_b.matrix_unit(0, k, l) @ omega)
                    rhs = np.sum(fa * np.array([np.trace(c @ eb) for c in psis]))
                    worst = max(worst, abs(lhs - rhs))
    return float(worst)


def lemma3_separable_decomposition(a: MatrixAlgebra, b: MatrixAlgebra, omega, dec: NuclearDecomposition,
                                   xi: XiMap | None = None, tol: float = 1e-8) -> SeparableSplitting:
    """Split ω on ``A ∨ B`` from a decomposition ``Ξ_B(a) = Σ φ_j(a) ξ_j``.

    ``ψ_j(b) = ((Δ^{1/4} + Δ^{-1/4})^{-1}(b* + JbJ)Ω | ξ_j)`` with Δ, J of
    ``(B', Ω)``; the density of ψ_j is ``Mξ_j Ω* + Ω (U* M ξ_j)^T`` for
    ``J = U∘conj`` and ``M = (Δ^{1/4} + Δ^{-1/4})^{-1}``.
    """
    v = np.asarray(getattr(omega, "vector", omega), dtype=complex)
    xi = xi or xi_map(a, b, v)
    lam, vec = np.linalg.eigh(hermitian_part(xi.delta))
    keep = lam > 1e-10 * max(lam.max(), 1.0)
    mvals = np.zeros_like(lam)
    mvals[keep] = 1.0 / (lam[keep] ** 0.25 + lam[keep] ** -0.25)
    mm = (vec * mvals) @ dagger(vec)
    u = xi.j_unitary
    dec_b = b.decomposition
    psis = []
    for f in dec.vectors.T:
        mf = mm @ f
        dens = np.outer(mf, np.conj(v)) + np.outer(v, dagger(u) @ mf)
        psis.append(dec_b.block_densities(dens)[0])
    phis = list(dec.functionals)
    res = _splitting_residual(a, b, v, phis, psis)
    out = SeparableSplitting(phis, psis, dec.vector_norms, res, dec.p)
    if res > tol:
        raise AlgebraError(f"Lemma-3 reconstruction residual {res:.2e} exceeds {tol:.0e}")
    return out


def _polar_partial_isometry(c: np.ndarray) -> np.ndarray:
    """``u`` with ``c u ≥ 0`` and ``‖c‖_1 = tr(c u)``."""
    l, _, rh = svd(c)
    return dagger(rh) @ dagger(l)


@dataclass
class DominatingFunctional:
    sigma: SeparableState
    min_eigenvalue: float  # of σ − ω on A ∨ B
    norm: float
    mu_1: float
    mu_p: float
    product_terms: list[tuple[np.ndarray, np.ndarray]]  # (state on A, positive functional on B)


def lemma4_dominating_functional(split: SeparableSplitting, rho_ab: np.ndarray) -> DominatingFunctional:
    """Separable ``σ = Σ_j ½(ρ_j + ρ_j(w_j* · w_j)) ≥ ω`` with ``ρ_j = φ_j(u_j ·) ⊗ ψ_j(v_j ·)``."""
    da, db = split.phis[0].shape[0], split.psis[0].shape[0]
    terms, products = [], []
    total = np.zeros((da * db, da * db), dtype=complex)
    for c, dmat in zip(split.phis, split.psis):
        nc, nd = trace_norm(c), trace_norm(dmat)
        if nc * nd <= 1e-15:
            continue
        u, v = _polar_partial_isometry(c), _polar_partial_isometry(dmat)
        pa, pb = hermitian_part(c @ u), hermitian_part(dmat @ v)
        qa, qb = hermitian_part(u @ pa @ dagger(u)), hermitian_part(v @ pb @ dagger(v))
        for x, y in ((pa, pb), (qa, qb)):
            w = 0.5 * float(np.real(np.trace(x)) * np.real(np.trace(y)))
            xs, ys = x / np.trace(x).real, y / np.trace(y).real
            terms.append((w, xs, ys))
            products.append((xs, w * ys))
            total += w * np.kron(xs, ys)
    sigma = SeparableState(tuple(terms), (da, db))
    mineig = float(np.linalg.eigvalsh(hermitian_part(total - rho_ab)).min())
    norm = float(np.real(np.trace(total)))
    mu1 = float(np.sum(split.phi_norms * split.psi_norms))
    return DominatingFunctional(sigma, mineig, norm, mu1, split.mu_p, products)


# ---------------------------------------------------------------------------
# bound chain
# ---------------------------------------------------------------------------

@dataclass
class NuclearData:
    """Best certified ν̂_p and the Lemma-3/4 pipeline run on its decomposition."""

    p: float
    nu_hat: float
    side: str
    decomposition: NuclearDecomposition
    splitting: SeparableSplitting
    dominating: DominatingFunctional


def nuclear_pipeline(triple: SplitTriple, p: float, xis=None, rng=None, iterations: int = 300) -> NuclearData:
    rng = np.random.default_rng(0) if rng is None else rng
    a, b = triple.a, triple.b
    om = triple.omega
    xi_a, xi_b = xis or xi_maps(a, b, om)
    dec_b = p_norm_upper(xi_b, p, iterations=iterations, rng=rng)
    dec_a = p_norm_upper(xi_a, p, iterations=iterations, rng=rng)
    if dec_b.nu_hat <= dec_a.nu_hat:
        side, dec = "B", dec_b
        split = lemma3_separable_decomposition(a, b, om, dec_b, xi_b)
    else:
        side, dec = "A", dec_a
        split = lemma3_separable_decomposition(b, a, om, dec_a, xi_a).swapped()
    dom = lemma4_dominating_functional(split, joint_density(a, b, om))
    return NuclearData(p, dec.nu_hat, side, dec, split, dom)


def tau_entropy(triple: SplitTriple, f: MatrixAlgebra, dom: DominatingFunctional) -> tuple[float, float]:
    """``S(τ̂)`` for ``τ = Σ_k ‖ψ_k‖ φ_k∘ε`` on F, and the estimate ``Σ_k η(‖ψ_k‖/‖σ‖)``."""
    a = triple.a
    om = triple.omega
    rho = np.outer(om, np.conj(om))
    _, dual = generalized_expectation_pair(f, a, StateFunctional(rho))
    dec_a = a.decomposition
    m = a.blocks[0][1]
    tau = np.zeros_like(rho)
    weights = []
    for phi_state, psi in dom.product_terms:
        wk = float(np.real(np.trace(psi)))
        weights.append(wk)
        tau += wk * dual(dec_a.embed(0, phi_state) / m)
    norm = float(np.real(np.trace(tau)))
    s_tau = von_neumann_entropy(tau / norm, f)
    est = float(np.sum(eta(np.array(weights) / dom.norm)))
    return s_tau, est


@dataclass
class ChainRow:
    p: float
    e_r_upper: float
    e_c: float
    e_c_commutant: float
    nu_hat: float
    side: str
    c_p: float
    bound: float
    lemma3_residual: float
    lemma4_min_eig: float
    sigma_norm: float
    mu_p: float
    tau_entropy: float
    est1: float
    eta_diagnostic: float
    chain_lower_ok: bool
    chain_upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.chain_lower_ok and self.chain_upper_ok


def bound_chain_verify(triple: SplitTriple, p_grid=(0.25, 0.5, 0.75), rng=None, er_restarts: int = 2,
                       iterations: int = 300) -> list[ChainRow]:
    """``E_R_upper ≤ E_C + 1e-6`` and ``E_C ≤ c_p ν̂_p^p + 1e-8`` for each p."""
    rng = np.random.default_rng(0) if rng is None else rng
    a, b = triple.a, triple.b
    om = triple.omega
    ce = canonical_entanglement_entropy(a, b, om)
    rho_ab = joint_density(a, b, om)
    er = relative_entanglement_entropy_upper(rho_ab, triple.leg_dims, rng=rng, restarts=er_restarts)
    xis = xi_maps(a, b, om)
    rows = []
    for p in p_grid:
        nd = nuclear_pipeline(triple, p, xis, rng, iterations)
        s_tau, est = tau_entropy(triple, ce.factor, nd.dominating)
        bound = c_p(p) * nd.nu_hat ** p
        psi_norms = nd.splitting.psi_norms * nd.splitting.phi_norms
        eta_diag = float(np.sum(eta(psi_norms / nd.dominating.norm)))
        rows.append(ChainRow(
            p=p, e_r_upper=er.value, e_c=ce.value, e_c_commutant=ce.commutant_value, nu_hat=nd.nu_hat,
            side=nd.side, c_p=c_p(p), bound=bound, lemma3_residual=nd.splitting.residual,
            lemma4_min_eig=nd.dominating.min_eigenvalue, sigma_norm=nd.dominating.norm, mu_p=nd.splitting.mu_p,
            tau_entropy=s_tau, est1=est, eta_diagnostic=eta_diag,
            chain_lower_ok=er.value <= ce.value + 1e-6, chain_upper_ok=ce.value <= bound + 1e-8,
        ))
    return rows


# ---------------------------------------------------------------------------
# Otani entropy bound
# ---------------------------------------------------------------------------

@dataclass
class OtaniReport:
    p: float
    nu_hat: float
    proof_candidate: float
    pure_extension_candidate: float
    bound: float
    feasible: bool

    @property
    def ok(self) -> bool:
        return self.feasible and self.proof_candidate <= self.bound


def otani_bound_verify(triple: SplitTriple, p: float = 0.5, rng=None, iterations: int = 300) -> OtaniReport:
    """Evaluate the candidate ``(σ̂, 1/‖σ‖)`` for the inclusion ``A ⊆ B'``.

    σ̂|_A dominates ω|_A / ‖σ‖. Its entropy on A bounds ``H^{B'}_{σ̂}(A)``
    for every extension (proof candidate); a pure extension to ``B'``
    collapses the bound to 0 in type I.
    """
    from .entropy import dominates_on

    nd = nuclear_pipeline(triple, p, rng=rng, iterations=iterations)
    dom = nd.dominating
    a = triple.a
    sig_a = sum(x * np.real(np.trace(y)) for x, y in dom.product_terms)
    sig_hat_a = hermitian_part(sig_a / dom.norm)
    om = triple.omega
    omega_a = a.decomposition.block_densities(np.outer(om, np.conj(om)))[0]
    lam = 1.0 / dom.norm
    feasible = dominates_on(sig_hat_a, omega_a, lam, None, tol=1e-10)
    s_a = von_neumann_entropy(sig_hat_a)
    proof = s_a / lam
    return OtaniReport(p, nd.nu_hat, proof, 0.0, 2 * c_p(p) * (nd.nu_hat + 1e-6), bool(feasible))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from splitent.channels import slice_map
from splitent.core import (
    AlgebraError,
    StateFunctional,
    full_algebra,
    generate_algebra,
    leg_algebra,
    partial_trace,
    random_density,
    random_pure,
    scalars,
    trace_norm,
)
from splitent.entanglement import eof_two_qubit_closed_form
from splitent.entropy import (
    PureDecompositionProblem,
    cocycle_derivative,
    entropy_supremum_estimate,
    make_conditional_term,
    otani_entropy_upper,
    relative_entropy_density,
    relative_entropy_spectral,
    subalgebra_entropy,
    von_neumann_entropy,
)

LN2 = np.log(2)


def kl(p, q):
    p, q = np.asarray(p), np.asarray(q)
    m = p > 0
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def faithful_pair(d, rng):
    return random_density(d, rng), random_density(d, rng)


@pytest.mark.parametrize("path", [relative_entropy_density, relative_entropy_spectral])
def test_relative_entropy_basic_values(path, rng):
    rho = random_density(3, rng)
    assert abs(path(rho, rho)) <= 1e-10
    assert np.isclose(path(np.diag([1.0, 0.0]), np.eye(2) / 2), LN2, atol=1e-10)
    assert path(np.eye(2) / 2, np.diag([1.0, 0.0])) == float("inf")


@given(st.integers(0, 10_000), st.integers(2, 4))
def test_two_paths_agree(seed, d):
    r = np.random.default_rng(seed)
    rho, sigma = faithful_pair(d, r)
    assert abs(relative_entropy_spectral(rho, sigma) - relative_entropy_density(rho, sigma)) <= 1e-8


def test_paths_agree_on_subalgebra(rng):
    m = leg_algebra((2, 3), 0)
    rho, sigma = faithful_pair(6, rng)
    direct = relative_entropy_density(partial_trace(rho, (2, 3), [0]), partial_trace(sigma, (2, 3), [0]))
    assert np.isclose(relative_entropy_density(rho, sigma, m), direct, atol=1e-10)
    assert np.isclose(relative_entropy_spectral(rho, sigma, m), direct, atol=1e-8)


@given(st.integers(0, 10_000), st.integers(2, 4))
def test_commuting_pair_is_classical_kl(seed, d):
    r = np.random.default_rng(seed)
    p, q = r.dirichlet(np.ones(d)), r.dirichlet(np.ones(d))
    u = np.linalg.qr(r.normal(size=(d, d)) + 1j * r.normal(size=(d, d)))[0]
    rho, sigma = u @ np.diag(p) @ u.conj().T, u @ np.diag(q) @ u.conj().T
    assert np.isclose(relative_entropy_density(rho, sigma), kl(p, q), atol=1e-10)
    assert np.isclose(cocycle_derivative(rho, sigma), kl(p, q), atol=1e-4)


@given(st.integers(0, 10_000))
def test_cocycle_derivative_matches_density(seed):
    r = np.random.default_rng(seed)
    rho, sigma = faithful_pair(2, r)
    assert abs(cocycle_derivative(rho, sigma) - relative_entropy_density(rho, sigma)) <= 1e-4
    assert abs(cocycle_derivative(rho, rho)) <= 1e-10


@given(st.integers(0, 10_000), st.integers(2, 4))
def test_pinsker(seed, d):
    r = np.random.default_rng(seed)
    rho, sigma = faithful_pair(d, r)
    assert relative_entropy_density(rho, sigma) >= trace_norm(rho - sigma) ** 2 / 2 - 1e-12


@given(st.integers(0, 10_000), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_scaling(seed, lam, mu):
    r = np.random.default_rng(seed)
    rho, sigma = faithful_pair(3, r)
    lhs = relative_entropy_density(lam * rho, mu * sigma)
    rhs = lam * relative_entropy_density(rho, sigma) - lam * np.log(mu / lam)
    assert abs(lhs - rhs) <= 1e-8


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_joint_convexity_and_superadditivity(seed, t):
    r = np.random.default_rng(seed)
    r1, s1 = faithful_pair(3, r)
    r2, s2 = faithful_pair(3, r)
    mix = relative_entropy_density(t * r1 + (1 - t) * r2, t * s1 + (1 - t) * s2)
    assert mix <= t * relative_entropy_density(r1, s1) + (1 - t) * relative_entropy_density(r2, s2) + 1e-10
    # superadditivity in the first argument, positive functionals
    sigma = s1
    lhs = relative_entropy_density(t * r1 + (1 - t) * r2, sigma)
    rhs = relative_entropy_density(t * r1, sigma) + relative_entropy_density((1 - t) * r2, sigma)
    assert lhs >= rhs - 1e-10


@given(st.integers(0, 10_000))
def test_monotone_under_partial_trace(seed):
    r = np.random.default_rng(seed)
    rho, sigma = faithful_pair(6, r)
    full = relative_entropy_density(rho, sigma)
    for keep in ([0], [1]):
        part = relative_entropy_density(partial_trace(rho, (2, 3), keep), partial_trace(sigma, (2, 3), keep))
        assert part <= full + 1e-10


@given(st.integers(0, 10_000))
def test_conditional_expectation_chain_rule(seed):
    # ε(x) = slice_ω_B(x) ⊗ 1 on M₂ ⊗ M₂, so s∘ε has density Tr_B(s) ⊗ ω_B
    r = np.random.default_rng(seed)
    rho, sigma = faithful_pair(4, r)
    omega_b = random_density(2, r)
    eps = slice_map(omega_b, 2)
    compose = lambda s: np.kron(partial_trace(s, (2, 2), [0]), omega_b)
    x = r.normal(size=(4, 4))
    assert np.isclose(np.trace(compose(sigma) @ x), np.trace(sigma @ np.kron(eps(x), np.eye(2))))
    n = leg_algebra((2, 2), 0)
    lhs = relative_entropy_density(rho, compose(sigma))
    rhs = relative_entropy_density(rho, sigma, n) + relative_entropy_density(rho, compose(rho))
    assert abs(lhs - rhs) <= 1e-8


@given(st.integers(0, 10_000))
def test_tensor_splitting(seed):
    r = np.random.default_rng(seed)
    rho = random_density(6, r)
    s1, s2 = random_density(2, r), random_density(3, r)
    r1, r2 = partial_trace(rho, (2, 3), [0]), partial_trace(rho, (2, 3), [1])
    lhs = relative_entropy_density(rho, np.kron(s1, s2))
    rhs = relative_entropy_density(r1, s1) + relative_entropy_density(r2, s2) + relative_entropy_density(rho, np.kron(r1, r2))
    assert abs(lhs - rhs) <= 1e-8


@given(st.integers(0, 10_000))
def test_strong_subadditivity(seed):
    r = np.random.default_rng(seed)
    rho = random_density(8, r)
    dims = (2, 2, 2)
    s = lambda keep: von_neumann_entropy(partial_trace(rho, dims, keep))
    assert von_neumann_entropy(rho) + s([1]) <= s([0, 1]) + s([1, 2]) + 1e-10


def test_von_neumann_entropy_values(rng):
    v = random_pure(3, rng)
    assert abs(von_neumann_entropy(np.outer(v, v.conj()))) <= 1e-10
    assert np.isclose(von_neumann_entropy(np.eye(2) / 2), LN2)
    with pytest.raises(AlgebraError):
        von_neumann_entropy(np.eye(2))


def test_von_neumann_on_subalgebra_is_marginal_entropy(rng):
    rho = random_density(6, rng)
    m = leg_algebra((2, 3), 1)
    assert np.isclose(von_neumann_entropy(rho, m), von_neumann_entropy(partial_trace(rho, (2, 3), [1])))


@pytest.mark.parametrize("seed", range(5))
def test_supremum_estimator_reaches_trace_formula(seed):
    r = np.random.default_rng(seed)
    rho = random_density(2, r)
    est = entropy_supremum_estimate(rho, rng=r, restarts=4)
    assert est.kind == "lower estimate"
    assert abs(est.value - von_neumann_entropy(rho)) <= 1e-3
    assert np.allclose(sum(est.densities()), rho, atol=1e-8)


def test_decomposition_gradient_matches_finite_differences(rng):
    rho = random_density(4, rng)
    a = leg_algebra((2, 2), 0)
    dec = a.decomposition
    prob = PureDecompositionProblem.build(rho, dec, make_conditional_term(dec.block_densities(rho)), k=6)
    y = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
    f0, g = prob.value_and_grad(y)
    for _ in range(3):
        dy = rng.normal(size=y.shape) + 1j * rng.normal(size=y.shape)
        h = 1e-6
        fd = (prob.value_and_grad(y + h * dy)[0] - prob.value_and_grad(y - h * dy)[0]) / (2 * h)
        assert abs(fd - 2 * np.real(np.vdot(g, dy))) <= 1e-5 * max(1.0, abs(fd))
    # every Y gives a decomposition of ρ
    w = prob.vectors(y)
    assert np.allclose(w @ w.conj().T, rho, atol=1e-10)


def test_subalgebra_entropy_scalars_is_zero(rng):
    rho = random_density(4, rng)
    assert subalgebra_entropy(rho, scalars(4), rng=rng).value == 0.0


def test_subalgebra_entropy_full_algebra(rng):
    v = random_pure(3, rng)
    pure = np.outer(v, v.conj())
    assert subalgebra_entropy(pure, full_algebra(3), rng=rng, restarts=2).value <= 1e-8
    rho = random_density(3, rng)
    est = subalgebra_entropy(rho, full_algebra(3), rng=rng, restarts=4)
    assert est.value <= von_neumann_entropy(rho) + 1e-10
    assert abs(est.value - von_neumann_entropy(rho)) <= 1e-3


def test_subalgebra_entropy_rejects_non_subalgebra(rng):
    with pytest.raises(AlgebraError):
        subalgebra_entropy(random_density(4, rng), full_algebra(4), leg_algebra((2, 2), 0))


@pytest.mark.parametrize("seed", range(3))
def test_two_qubit_subalgebra_entropy_via_concurrence(seed):
    # H_ω(A) = S_A(ω) − E_F(ω) for A the first leg inside the full two-qubit algebra
    r = np.random.default_rng(seed)
    rho = random_density(4, r, rank=2)
    a = leg_algebra((2, 2), 0)
    est = subalgebra_entropy(rho, a, full_algebra(4), rng=r, restarts=8)
    expected = von_neumann_entropy(rho, a) - eof_two_qubit_closed_form(rho)
    assert est.value <= expected + 1e-8
    assert abs(est.value - expected) <= 5e-3


def test_martingale_along_nested_chain(rng):
    rho = random_density(4, rng)
    first = leg_algebra((2, 2), 0)
    diag = generate_algebra(list(first.basis) + [np.kron(np.eye(2), np.diag([1.0, 0.0]))])
    chain = [first, diag, full_algebra(4)]
    assert first.dim < diag.dim < 16
    values = [subalgebra_entropy(rho, m, full_algebra(4), rng=np.random.default_rng(1), restarts=6).value
              for m in chain]
    assert all(b >= a - 1e-6 for a, b in zip(values, values[1:]))
    assert abs(values[-1] - von_neumann_entropy(rho)) <= 1e-3


def test_otani_candidates(rng):
    rho = random_density(4, rng)
    a, b = leg_algebra((2, 2), 0), full_algebra(4)
    h = subalgebra_entropy(rho, a, b, rng=rng, restarts=4).value
    est = otani_entropy_upper(rho, a, b, [(rho, 1.0)])
    assert est.kind == "upper estimate"
    assert est.value >= h - 1e-8
    # a pure restriction cannot dominate a faithful ω on A
    pure_a = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2)
    infeasible = otani_entropy_upper(rho, a, b, [(pure_a, 0.5), (rho, 1.0)])
    assert infeasible.candidate_values[0] == float("inf")
    with pytest.raises(AlgebraError):
        otani_entropy_upper(rho, a, b, [(pure_a, 0.5)])


def test_otani_pure_restriction_gives_zero():
    # ω = e0e0* ⊗ 1/2 is pure on A; the state itself is feasible with λ = 1
    omega = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2)
    est = otani_entropy_upper(omega, leg_algebra((2, 2), 0), full_algebra(4), [(omega, 1.0)])
    assert abs(est.value) <= 1e-10


def test_state_functional_inputs(rng):
    m = leg_algebra((2, 2), 1)
    rho, sigma = faithful_pair(4, rng)
    phi, psi = StateFunctional(rho, m), StateFunctional(sigma, m)
    assert np.isclose(relative_entropy_density(phi, psi), relative_entropy_density(rho, sigma, m))


def test_concavity_full_algebra_asserted_subalgebra_recorded(record_property):
    r = np.random.default_rng(5)
    r1, r2 = random_density(4, r), random_density(4, r)
    mix = 0.4 * r1 + 0.6 * r2
    full = full_algebra(4)
    h = lambda rho, a: subalgebra_entropy(rho, a, full, rng=np.random.default_rng(2), restarts=6).value
    # on the full algebra H equals S, which is concave
    assert h(mix, full) >= 0.4 * h(r1, full) + 0.6 * h(r2, full) - 1e-3
    a = leg_algebra((2, 2), 0)
    gap = h(mix, a) - (0.4 * h(r1, a) + 0.6 * h(r2, a))
    record_property("subalgebra_concavity_gap", gap)

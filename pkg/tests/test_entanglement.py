import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitent.channels import local_measurement_operation, local_unitary_operation
from splitent.core import (
    SeparableState,
    density_entropy,
    full_algebra,
    generate_algebra,
    leg_algebra,
    partial_trace,
    permute_legs,
    random_density,
    random_pure,
    random_unitary,
)
from splitent.entanglement import (
    SeparableWitnessProblem,
    canonical_entanglement_entropy,
    concurrence,
    entanglement_of_formation,
    entanglement_of_formation_subsystem,
    eof_identity_check,
    eof_two_qubit_closed_form,
    mutual_information,
    mutual_information_spectral,
    relative_entanglement_entropy_upper,
    swap_state,
    werner_relative_entanglement_oracle,
    werner_state,
)
from splitent.instances import random_split_triple

LN2 = np.log(2)
BELL = np.outer(*(2 * [np.array([1, 0, 0, 1]) / np.sqrt(2)]))
D2 = (2, 2)


def er(rho, dims=D2, **kw):
    kw.setdefault("restarts", 2)
    return relative_entanglement_entropy_upper(rho, dims, rng=np.random.default_rng(0), **kw)


def separable_state(rng, terms=3, dims=D2):
    w = rng.dirichlet(np.ones(terms))
    return SeparableState(tuple((x, random_density(dims[0], rng), random_density(dims[1], rng)) for x in w), dims)


def werner_closed_form(f):
    # ln 2 − h(F) in nats for F ≥ 1/2
    return LN2 + f * np.log(f) + (1 - f) * np.log(1 - f)


def test_mutual_information_values(rng):
    prod = np.kron(random_density(2, rng), random_density(3, rng))
    assert abs(mutual_information(prod, (2, 3))) <= 1e-10
    assert np.isclose(mutual_information(BELL, D2), 2 * LN2)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_mutual_information_paths_agree(seed, rank):
    # rank-deficient states carry ~1e-17 eigenvalues that must not enter Δ_{η,ξ}
    rho = random_density(4, np.random.default_rng(seed), rank=rank)
    assert abs(mutual_information(rho, D2) - mutual_information_spectral(rho, D2)) <= 1e-8


def test_er_bell_and_separable(rng):
    assert abs(er(BELL).value - LN2) <= 1e-4
    sep = separable_state(rng)
    est = er(sep.density())
    assert est.kind == "upper estimate"
    assert est.value <= 1e-6


@given(st.integers(0, 10_000))
@settings(max_examples=8)
def test_er_below_mutual_information(seed):
    rho = random_density(4, np.random.default_rng(seed))
    est = er(rho, restarts=0)
    assert est.value <= mutual_information(rho, D2) + 1e-10
    # the witness is a separable state and the value is evaluated on it
    assert np.isclose(np.trace(est.witness.density()).real, 1.0)


def test_er_pure_state_is_marginal_entropy(rng):
    v = random_pure(4, rng)
    rho = np.outer(v, v.conj())
    assert abs(er(rho).value - density_entropy(partial_trace(rho, D2, [0]))) <= 1e-4


@pytest.mark.parametrize("f", [0.5, 0.6, 0.75, 0.9])
def test_werner_oracle_matches_closed_form(f):
    assert abs(werner_relative_entanglement_oracle(f, grid=2001) - werner_closed_form(f)) <= 1e-8


@pytest.mark.parametrize("f", [0.3, 0.6, 0.8])
def test_er_on_werner_family(f):
    oracle = werner_relative_entanglement_oracle(f, grid=2001)
    assert abs(er(werner_state(f)).value - oracle) <= 1e-3


def test_witness_gradient_matches_finite_differences(rng):
    prob = SeparableWitnessProblem(random_density(4, rng), D2, 5)
    x = prob.random_start(rng)
    _, g = prob.value_and_grad(x)
    for _ in range(3):
        d = rng.normal(size=x.shape)
        h = 1e-6
        fd = (prob.value_and_grad(x + h * d)[0] - prob.value_and_grad(x - h * d)[0]) / (2 * h)
        assert abs(fd - g @ d) <= 1e-5 * max(1.0, abs(fd))


def test_e0_swap_symmetry(rng):
    rho = random_density(4, rng)
    assert abs(er(rho).value - er(swap_state(rho, D2)).value) <= 1e-4


def test_e1_positive_on_bell_type(rng):
    u = np.kron(random_unitary(2, rng), random_unitary(2, rng))
    assert er(u @ BELL @ u.conj().T).value >= 1e-3


def test_e3_convexity(rng):
    r1, r2 = BELL, random_density(4, rng)
    for lam in (0.3, 0.7):
        mix = er(lam * r1 + (1 - lam) * r2).value
        assert mix <= lam * er(r1).value + (1 - lam) * er(r2).value + 1e-4


def test_e4_separable_operations(rng):
    rho = 0.8 * BELL + 0.2 * random_density(4, rng)
    before = er(rho).value
    u = random_unitary(2, rng)
    op = local_measurement_operation([np.outer(u[:, k], u[:, k].conj()) for k in range(2)], 2)
    after = sum(p * er(r).value for p, r in op.apply(rho) if p > 1e-12)
    assert after <= before + 1e-4
    op = local_unitary_operation(random_unitary(2, rng), random_unitary(2, rng))
    [(p, r)] = op.apply(rho)
    assert abs(er(r).value - before) <= 1e-4


def test_e5_subadditivity_on_products(rng):
    r1, r2 = BELL, random_density(4, rng)
    # ω₁ ⊗ ω₂ on (A₁A₂) ⊗ (B₁B₂): reorder legs from (A₁, B₁, A₂, B₂)
    joint = permute_legs(np.kron(r1, r2), (2, 2, 2, 2), (0, 2, 1, 3))
    e_joint = er(joint, dims=(4, 4), restarts=0, k=32).value
    assert e_joint <= er(r1).value + er(r2).value + 1e-4


def test_eof_pure_and_separable(rng):
    v = random_pure(4, rng)
    rho = np.outer(v, v.conj())
    assert abs(entanglement_of_formation(rho, D2, restarts=2).value - density_entropy(partial_trace(rho, D2, [0]))) <= 1e-8
    v = np.kron(random_pure(2, rng), random_pure(2, rng))
    w = np.kron(random_pure(2, rng), random_pure(2, rng))
    sep = 0.4 * np.outer(v, v.conj()) + 0.6 * np.outer(w, w.conj())
    assert entanglement_of_formation(sep, D2, restarts=4).value <= 1e-6


def test_concurrence_values():
    assert np.isclose(concurrence(BELL), 1.0)
    assert np.isclose(eof_two_qubit_closed_form(BELL), LN2)
    assert concurrence(np.eye(4) / 4) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_eof_matches_wootters(seed):
    r = np.random.default_rng(seed)
    rho = random_density(4, r, rank=2)
    est = entanglement_of_formation(rho, D2, rng=r, restarts=8)
    assert est.kind == "upper estimate"
    assert abs(est.value - eof_two_qubit_closed_form(rho)) <= 1e-3


def test_eof_identity_examples(rng):
    v = random_pure(4, rng)
    pure = np.outer(v, v.conj())
    assert eof_identity_check(pure, D2, rng=rng, restarts=2)["residual"] <= 1e-6
    prod = np.kron(random_density(2, rng), random_density(2, rng))
    res = eof_identity_check(prod, D2, rng=rng, restarts=4)
    assert res["eof_upper"] <= 1e-6 and res["residual"] <= 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_eof_identity_random(seed):
    r = np.random.default_rng(seed)
    res = eof_identity_check(random_density(4, r, rank=2), D2, rng=r, restarts=8)
    assert res["residual"] <= 5e-3


def test_eof_martingale_two_qutrits(rng):
    rho = random_density(9, rng, rank=3)
    dims = (3, 3)
    # M₂ ⊕ C inside M₃
    e01 = np.zeros((3, 3))
    e01[0, 1] = 1.0
    small = generate_algebra([e01, e01.T, np.diag([0, 0, 1.0])])
    assert small.dim == 5
    chain = [(small, small), (full_algebra(3), small), (full_algebra(3), full_algebra(3))]
    vals = [entanglement_of_formation_subsystem(rho, dims, a, b, rng=np.random.default_rng(1), restarts=6)
            for a, b in chain]
    full = entanglement_of_formation(rho, dims, rng=np.random.default_rng(1), restarts=6).value
    assert all(y >= x - 1e-3 for x, y in zip(vals, vals[1:]))
    assert abs(vals[-1] - full) <= 1e-3


def test_canonical_entropy_commutant_case(rng):
    v = random_pure(4, rng)
    a = leg_algebra(D2, 0)
    ce = canonical_entanglement_entropy(a, leg_algebra(D2, 1), v)
    assert np.isclose(ce.value, density_entropy(partial_trace(np.outer(v, v.conj()), D2, [0])))


@given(st.integers(0, 10_000))
@settings(max_examples=5)
def test_canonical_entropy_two_sided_and_chain(seed):
    t3 = random_split_triple(np.random.default_rng(seed))
    ce = canonical_entanglement_entropy(t3.a, t3.b, t3.omega)
    assert abs(ce.value - ce.commutant_value) <= 1e-8
    rho = np.outer(t3.omega, t3.omega.conj())
    rho_ab = partial_trace(rho, t3.dims, [0, 2])
    assert er(rho_ab, restarts=0).value <= ce.value + 1e-8

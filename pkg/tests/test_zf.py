import numpy as np
import pytest

from splitent.core import op_norm
from splitent.zf import (
    N_MAX,
    FockSpace,
    GaussianTestFunction,
    RapidityGrid,
    TruncatedFockState,
    TruncationError,
    constant_scattering,
    decay_experiment,
    exchange,
    exchange_operator,
    field_matrix,
    geometric_grid,
    inner,
    is_monotone_decreasing,
    one_particle_kernel,
    projection_matrix,
    s2_projection,
    scattering_family,
    sinh_gordon,
    xi_s_sector,
)

FAMILIES = [constant_scattering(1), constant_scattering(-1)] + [sinh_gordon(b) for b in (0.25, 0.5, 0.75)]
SG = sinh_gordon(0.5)


def onb_matrix(op, n, grid):
    """Dense matrix of a map on rank-n grid tensors in weighted-orthonormal coordinates."""
    sw = np.sqrt(np.prod(np.meshgrid(*([grid.weights] * n), indexing="ij"), axis=0)).ravel()
    cols = []
    for k in range(grid.n ** n):
        e = np.zeros(grid.n ** n, dtype=complex)
        e[k] = 1.0 / sw[k]
        cols.append(op(e.reshape((grid.n,) * n)).ravel() * sw)
    return np.array(cols).T


def random_wave(rng, grid, n):
    shape = (grid.n,) * n
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_state(space, rng, top=2):
    comps = {0: np.array(rng.normal() + 0j)}
    for n in range(1, top + 1):
        comps[n] = random_wave(rng, space.grid, n)
    return space.state(comps)


# scattering functions ----------------------------------------------------

@pytest.mark.parametrize("s2", FAMILIES, ids=lambda s: f"{s.name}-{s.b}")
def test_axioms(s2):
    res = s2.axiom_residuals()
    assert max(res.values()) <= 1e-12


def test_class_tags():
    assert constant_scattering(1).class_tag == "S+"
    assert constant_scattering(-1).class_tag == "S-"
    assert sinh_gordon(0.3).class_tag == "S-"
    assert scattering_family("free").name == "free"
    with pytest.raises(ValueError):
        scattering_family("bogus")
    with pytest.raises(ValueError):
        sinh_gordon(1.0)
    with pytest.raises(ValueError):
        constant_scattering(0)


def test_reflected_coupling_gives_same_function():
    th = np.linspace(-3, 3, 41)
    assert np.allclose(sinh_gordon(0.3)(th), sinh_gordon(0.7)(th), atol=1e-14)


def test_grid_quadrature():
    g = RapidityGrid(6.0, 200)
    assert g.quadrature_check() <= 1e-10
    assert np.all(g.weights > 0) and np.all(np.diff(g.nodes) > 0)
    assert np.isclose(g.integrate(np.ones_like), 12.0)
    assert np.isclose(inner(g, g.delta(7), np.cos(g.nodes)), np.cos(g.nodes[7]))


# exchange operators ------------------------------------------------------

def test_exchange_trivial_scattering_is_transposition(rng):
    g = RapidityGrid(3.0, 5)
    psi = random_wave(rng, g, 3)
    d = exchange_operator(3, 1, constant_scattering(1), g)
    assert np.array_equal(d(psi), np.swapaxes(psi, 1, 2))


@pytest.mark.parametrize("s2", [SG, sinh_gordon(0.25)], ids=["b0.5", "b0.25"])
def test_braid_relation(s2, rng):
    g = RapidityGrid(4.0, 6)
    d0, d1 = (exchange_operator(3, i, s2, g) for i in (0, 1))
    psi = random_wave(rng, g, 3)
    lhs = d0(d1(d0(psi)))
    rhs = d1(d0(d1(psi)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(psi))


@pytest.mark.parametrize("s2", FAMILIES, ids=lambda s: f"{s.name}-{s.b}")
def test_exchange_unitary_and_involutive(s2):
    g = RapidityGrid(4.0, 7)
    d = onb_matrix(exchange_operator(2, 0, s2, g), 2, g)
    assert op_norm(d.conj().T @ d - np.eye(49)) <= 1e-12
    # S₂(θ)S₂(−θ) = 1 makes D(τ)² the identity
    assert op_norm(d @ d - np.eye(49)) <= 1e-12


def test_exchange_index_errors():
    g = RapidityGrid(3.0, 4)
    with pytest.raises(IndexError):
        exchange_operator(3, 2, SG, g)
    with pytest.raises(IndexError):
        exchange_operator(5, 0, SG, g)
    with pytest.raises(IndexError):
        exchange(np.zeros((4, 4)), -1, np.ones((4, 4)))


# projections -------------------------------------------------------------

def test_projection_bosonic_and_fermionic(rng):
    g = RapidityGrid(3.0, 5)
    psi = random_wave(rng, g, 3)
    sym = s2_projection(3, constant_scattering(1), g)(psi)
    asym = s2_projection(3, constant_scattering(-1), g)(psi)
    perms = [(0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]
    signs = [1, -1, -1, -1, 1, 1]
    assert np.allclose(sym, sum(np.transpose(psi, p) for p in perms) / 6)
    assert np.allclose(asym, sum(s * np.transpose(psi, p) for s, p in zip(signs, perms)) / 6)
    # the antisymmetric part vanishes on the diagonal
    assert np.allclose(asym[2, 2, :], 0)


def test_projection_two_particle_expansion(rng):
    g = RapidityGrid(4.0, 8)
    p1, p2 = random_wave(rng, g, 1), random_wave(rng, g, 1)
    th = g.nodes
    s = SG(th[None, :] - th[:, None])  # S₂(θ₂ − θ₁)
    expected = 0.5 * (np.outer(p1, p2) + s * np.outer(p1, p2).T)
    assert np.allclose(s2_projection(2, SG, g)(np.outer(p1, p2)), expected, atol=1e-14)


@pytest.mark.parametrize("n,size", [(2, 8), (3, 5), (4, 4)])
@pytest.mark.parametrize("s2", [constant_scattering(-1), SG], ids=["ising", "sg"])
def test_projection_idempotent_and_selfadjoint(n, size, s2):
    g = RapidityGrid(3.0, size)
    e = projection_matrix(n, s2, g)
    assert op_norm(e @ e - e) <= 1e-10
    assert op_norm(e - e.conj().T) <= 1e-10
    # absorption E D(τ_i) = E
    for i in range(n - 1):
        d = onb_matrix(exchange_operator(n, i, s2, g), n, g)
        assert op_norm(e @ d - e) <= 1e-10


def test_projection_low_sectors(rng):
    g = RapidityGrid(3.0, 6)
    psi = random_wave(rng, g, 1)
    assert np.array_equal(s2_projection(1, SG, g)(psi), psi)
    space = FockSpace(SG, g)
    vac = space.state({0: np.array(1.0 + 0j)})
    assert vac.components[0] == 1.0 and vac.norm(g) == 1.0
    with pytest.raises(TruncationError):
        space.project(np.zeros((2,) * 5))
    with pytest.raises(TruncationError):
        FockSpace(SG, g, n_max=N_MAX + 1)


# ladder operators --------------------------------------------------------

def test_annihilation_kills_vacuum(rng):
    space = FockSpace(SG, RapidityGrid(4.0, 10))
    out = space.annihilate(random_wave(rng, space.grid, 1), TruncatedFockState.vacuum())
    assert out.norm(space.grid) == 0.0


@pytest.mark.parametrize("s2", FAMILIES[1:3], ids=["ising", "sg0.25"])
def test_adjointness(s2, rng):
    space = FockSpace(s2, RapidityGrid(4.0, 10))
    chi = random_wave(rng, space.grid, 1)
    phi, psi = random_state(space, rng, 2), random_state(space, rng, 3)
    lhs = space.create(chi, phi).inner(psi, space.grid)
    rhs = phi.inner(space.annihilate(chi, psi), space.grid)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_linearity(rng):
    space = FockSpace(SG, RapidityGrid(4.0, 10))
    f, g = random_wave(rng, space.grid, 1), random_wave(rng, space.grid, 1)
    psi = random_state(space, rng, 2)
    c = 0.3 - 1.2j
    lin = space.create(c * f + g, psi) - space.create(f, psi).scale(c) - space.create(g, psi)
    anti = space.annihilate(c * f + g, psi) - space.annihilate(f, psi).scale(np.conj(c)) - space.annihilate(g, psi)
    assert lin.norm(space.grid) <= 1e-10 and anti.norm(space.grid) <= 1e-10


@pytest.mark.parametrize("s2", FAMILIES, ids=lambda s: f"{s.name}-{s.b}")
def test_zf_relation(s2, rng):
    space = FockSpace(s2, RapidityGrid(5.0, 16))
    f, g = random_wave(rng, space.grid, 1), random_wave(rng, space.grid, 1)
    psi = random_state(space, rng, 2)
    assert space.zf_residual(f, g, psi) <= 1e-8 * psi.norm(space.grid) * np.linalg.norm(f) * np.linalg.norm(g)


def test_free_bosonic_ladder(rng):
    space = FockSpace(constant_scattering(1), RapidityGrid(4.0, 10))
    f, g = random_wave(rng, space.grid, 1), random_wave(rng, space.grid, 1)
    psi = random_state(space, rng, 2)
    comm = space.annihilate(f, space.create(g, psi)) - space.create(g, space.annihilate(f, psi))
    resid = comm - psi.scale(inner(space.grid, f, g))
    assert resid.norm(space.grid) <= 1e-10 * abs(inner(space.grid, f, g)) * psi.norm(space.grid)


def test_creation_truncation(rng):
    space = FockSpace(SG, RapidityGrid(3.0, 4))
    top = space.state({N_MAX: random_wave(rng, space.grid, N_MAX)})
    chi = random_wave(rng, space.grid, 1)
    with pytest.raises(TruncationError):
        space.create(chi, top)
    assert space.create(chi, top, strict=False).norm(space.grid) == 0.0


def test_conjugation(rng):
    space = FockSpace(SG, RapidityGrid(4.0, 8))
    phi, psi = random_state(space, rng, 3), random_state(space, rng, 3)
    jpsi = space.conjugation(psi)
    assert (space.conjugation(jpsi) - psi).norm(space.grid) == 0.0
    # antiunitary: (JΦ | JΨ) = (Ψ | Φ)
    assert np.isclose(space.conjugation(phi).inner(jpsi, space.grid), psi.inner(phi, space.grid))
    # J maps the S₂-symmetric space to itself
    assert jpsi.symmetry_residual(SG, space.grid) <= 1e-10


# fields ------------------------------------------------------------------

def test_test_function_metadata():
    f = GaussianTestFunction((0.0, 10.0), 1.0)
    assert f.in_right_wedge() and not f.in_left_wedge()
    assert f.star().in_left_wedge()
    assert f.is_real and not GaussianTestFunction((0, 0), 1.0, 1j).is_real
    g = RapidityGrid(3.0, 10)
    # f real: f⁻ = conj f⁺
    assert np.allclose(f.minus(g), np.conj(f.plus(g)))


@pytest.mark.parametrize("s2", [constant_scattering(-1), SG], ids=["ising", "sg"])
def test_field_symmetric_for_real_f(s2):
    space = FockSpace(s2, RapidityGrid(3.0, 6))
    m = field_matrix(space, GaussianTestFunction((0.2, 0.5), 1.0))
    assert op_norm(m - m.conj().T) <= 1e-8 * op_norm(m)


def locality_residual(d, n, timelike=False):
    space = FockSpace(SG, RapidityGrid(3.0, n))
    psi = space.state({1: np.exp(-space.grid.nodes ** 2) + 0j})
    if timelike:
        f, g = GaussianTestFunction((d, 0.0), 1.0), GaussianTestFunction((-d, 0.0), 1.0)
    else:
        f, g = GaussianTestFunction((0.0, d), 1.0), GaussianTestFunction((0.0, -d), 1.0)
    return space.commutator_residual(f, g, psi)


LOCALITY_PATH = [(2.0, 24), (3.0, 32), (4.0, 48), (6.0, 64)]


def test_locality_improves_with_separation_and_grid():
    res = [locality_residual(d, n) for d, n in LOCALITY_PATH]
    assert is_monotone_decreasing(res)
    assert res[-1] <= 1e-6
    # timelike separation: no cancellation
    assert all(locality_residual(d, 32, timelike=True) >= 1e-2 for d in (1.0, 2.0))


# Ξ(s) --------------------------------------------------------------------

def test_xi_sectors_basic():
    g = RapidityGrid(6.0, 60)
    secs = [xi_s_sector(s, SG, g) for s in geometric_grid(0.5, 10.0, 6)]
    assert all(np.array_equal(x.singular_values[0], [1.0]) for x in secs)
    assert is_monotone_decreasing([x.schatten(1, 1.0) for x in secs])
    totals = [x.norm1_total for x in secs]
    assert is_monotone_decreasing(totals) and totals[-1] > 1.0 and totals[-1] - 1 <= 1e-4
    with pytest.raises(ValueError):
        xi_s_sector(0.0, SG, g)


def test_xi_truncation_flag():
    assert xi_s_sector(0.05, SG, RapidityGrid(2.0, 20)).truncation_flag
    assert not xi_s_sector(1.0, SG, RapidityGrid(6.0, 20)).truncation_flag


def test_xi_grid_refinement():
    for s in (0.5, 2.0):
        a = xi_s_sector(s, SG, RapidityGrid(6.0, 100))
        b = xi_s_sector(s, SG, RapidityGrid(6.0, 200))
        for n in (1, 2):
            assert abs(a.schatten(n, 1.0) / b.schatten(n, 1.0) - 1) < 0.01


@pytest.mark.parametrize("s2", [constant_scattering(1), constant_scattering(-1), SG], ids=["free", "ising", "sg"])
def test_xi_sector2_against_dense(s2):
    g = RapidityGrid(4.0, 12)
    s = 0.7
    t = one_particle_kernel(g, s)
    e2 = projection_matrix(2, s2, g)
    dense = e2 @ np.kron(t, t) @ e2
    ref = np.linalg.svd(dense, compute_uv=False)
    sec = xi_s_sector(s, s2, g)
    assert abs(sec.schatten(2, 1.0) - ref.sum()) <= 1e-6 * ref.sum()
    assert abs(sec.schatten(1, 1.0) - np.linalg.svd(t, compute_uv=False).sum()) <= 1e-6


def test_one_particle_kernel_positive_semidefinite():
    t = one_particle_kernel(RapidityGrid(5.0, 40), 1.0)
    sv = np.linalg.svd(t, compute_uv=False)
    assert np.all(sv >= 0) and sv[0] > 0


# decay experiment --------------------------------------------------------

S_SHORT = geometric_grid(0.5, 10.0, 6)


@pytest.mark.parametrize("s2", FAMILIES, ids=lambda s: f"{s.name}-{s.b}")
def test_decay_monotone_for_every_family(s2):
    rows = decay_experiment(s2, S_SHORT, n=80)
    assert is_monotone_decreasing([r.ln_norm1 for r in rows])
    assert rows[-1].ln_norm1 < 0.05
    assert all(r.ceiling == pytest.approx(1 / np.e) for r in rows)


def test_decay_free_baseline():
    free = decay_experiment(constant_scattering(1), S_SHORT, n=80)
    sg = decay_experiment(SG, S_SHORT, n=80)
    # the one-particle sector does not see S₂
    assert all(a.sector1_norm == b.sector1_norm for a, b in zip(free, sg))
    # the S₂ twist only changes the two-particle sector
    assert all(b.sector2_norm <= a.sector2_norm * (1 + 1e-10) for a, b in zip(free, sg))


def test_decay_proxy_limit():
    [row] = decay_experiment(SG, [40.0], n=80)
    assert row.ec_proxy_half == pytest.approx(2 / np.e, rel=1e-3)
    assert set(row.as_dict()) >= {"family", "b", "s", "norm1_total", "ln_norm1", "sector1_norm", "sector2_norm"}

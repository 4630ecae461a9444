import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from hamloop import geom
from hamloop import symp_core as sc
from hamloop.errors import CertificateFailure, InvalidParameters
from hamloop.scenarios import certify_closed, certify_invariant_charts, certify_normalized
from hamloop.scenarios import hirzebruch as hz
from hamloop.scenarios import sphere as sph
from hamloop.scenarios import torus as tor

F = Fraction
TWO_PI = 2 * math.pi


def fd_vs_closed_linearization(loop, chart, x, times):
    closed = loop.linearize(chart, times, x)
    fd = loop.linearize_fd(chart, times, x)
    return np.abs(closed - fd).max()


# -- expected records --------------------------------------------------------


def test_expected_records():
    assert sph.sphere_expected() == {"J_U": 1, "J_V": -1, "I": 0, "chern": 2}
    assert tor.torus_expected() == {"J": 0, "I": 0}
    e = hz.hirzebruch_expected(1, "3", "1")
    assert e["kappa"] == F(7, 15) and e["kappa_tilde"] == F(19, 15)
    assert e["N"] == (F(14, 5), F(-1, 15), F(-32, 15), F(-1, 15))
    assert e["N_tilde"] == (F(-7, 5), F(38, 15), F(16, 15), F(-37, 15))
    assert (e["I_psi"], e["I_psi_tilde"], e["ratio"]) == (F(8, 15), F(-4, 15), F(-1, 2))
    assert sum(e["N"]) == e["I_psi"] and sum(e["N_tilde"]) == e["I_psi_tilde"]
    e = hz.hirzebruch_expected(2, "5", "1")
    assert (e["I_psi"], e["I_psi_tilde"], e["ratio"], e["chern"]) == (F(7, 6), F(-7, 6), -1, 10)
    assert e["maslov_psi_tilde"] == (0, 0, 1, 2, -1)


def test_rational_parsing():
    assert hz.parse_rational("7/3") == F(7, 3)
    with pytest.raises(InvalidParameters):
        hz.parse_rational("x/3")
    with pytest.raises(InvalidParameters):
        hz.HirzebruchScenario(2, F(2), F(1))


# -- sphere ------------------------------------------------------------------


@pytest.mark.parametrize("eps_hat", [0.1, 0.3, 0.5, 0.8, 1.2])
def test_sphere_boundary_value(eps_hat):
    assert sph.SphereScenario(eps_hat).boundary_value() == \
        pytest.approx(TWO_PI * math.sin(eps_hat), rel=1e-12)


@pytest.mark.parametrize("eps_hat", [0.0, -0.2, math.pi / 2, 2.0])
def test_sphere_rejects_bad_overlap(eps_hat):
    with pytest.raises(InvalidParameters):
        sph.SphereScenario(eps_hat)


def test_sphere_cap_data_rejects_bad_width():
    with pytest.raises(InvalidParameters):
        sph.SphereScenario().polar_cap_data(1.5)


def test_sphere_linearization_matches_differences():
    scen = sph.SphereScenario(0.4)
    loop = scen.loop()
    times = np.linspace(0, 1, 9)
    for chart in scen.charts():
        for x in loop.maslov_points[chart.id]:
            assert fd_vs_closed_linearization(loop, chart, x, times) < 1e-5


def test_sphere_hamiltonian_has_zero_mean_and_generates_the_flow():
    whole = geom.Region("S2", 1, ((1, -1.0, 1.0), (0, 0.0, TWO_PI)))
    assert abs(geom.integrate_volume(whole, lambda x: sph.hamiltonian(0, x),
                                     geom.QuadratureSpec()).value) < 1e-12
    # omega = dphi ^ dz and iota_X omega = -df give X = -df/dz d/dphi = 2 pi d/dphi
    x = np.array([[1.0, 0.3]])
    assert sph.flow(0.01, x)[0, 0] - x[0, 0] == pytest.approx(0.01 * TWO_PI)


def test_sphere_phase_closed_form_matches_differences():
    scen = sph.SphereScenario(0.7)
    u, v = scen.charts()
    phase = geom.TransitionPhase(u, v, sph.north_from_south_jacobian)
    rng = np.random.default_rng(21)
    s = math.sin(0.7)
    pts = np.stack([rng.uniform(0, TWO_PI, 100), rng.uniform(-s, s, 100)], -1)
    assert np.abs(phase(pts, "closed-form") - phase(pts, "finite-difference")).max() < 1e-5


# -- torus -------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2])
def test_torus_loop_closes(n):
    scen = tor.TorusScenario(n, seed=3)
    pts = np.random.default_rng(0).uniform(0, 1, (8, 2 * n))
    back = scen.flow(1.0, pts)
    assert np.abs(geom.wrap(back - pts, (1.0,) * (2 * n))).max() < 1e-8
    mid = scen.flow(0.5, pts)
    assert np.abs(geom.wrap(mid - pts, (1.0,) * (2 * n))).max() > 1e-3


def test_torus_reparameterization_endpoints():
    assert tor.reparameterization(0.0) == 0 and abs(tor.reparameterization(1.0)) < 1e-15
    t = np.linspace(0, 1, 11)
    h = 1e-6
    rate = (tor.reparameterization(t + h) - tor.reparameterization(t - h)) / (2 * h)
    assert np.allclose(rate, tor.reparameterization_rate(t), atol=1e-8)


def test_torus_generator_is_mean_zero_and_periodic():
    g = tor.TrigHamiltonian.random(2, seed=5)
    assert not np.any(np.all(g.freqs == 0, axis=1))
    x = np.random.default_rng(1).uniform(0, 1, (10, 4))
    assert np.allclose(g(x), g(x + np.array([1.0, -2.0, 0.0, 3.0])))
    grid = np.stack(np.meshgrid(*[np.arange(6) / 6] * 4, indexing="ij"), -1).reshape(-1, 4)
    assert abs(g(grid).mean()) < 1e-12


def test_torus_gradient_and_hessian():
    g = tor.TrigHamiltonian.random(1, seed=2)
    x = np.array([0.3, 0.71])
    num = geom.central_jacobian(lambda y: g(y)[..., None], x[None], h=1e-6)[0, 0]
    assert np.allclose(num, g.gradient(x), atol=1e-7)
    hes = geom.central_jacobian(g.gradient, x[None], h=1e-6)[0]
    assert np.allclose(hes, g.hessian(x), atol=1e-6)


@pytest.mark.parametrize("n, seed", [(1, 0), (2, 4)])
def test_torus_linearization_matches_differences(n, seed):
    scen = tor.TorusScenario(n, seed)
    loop = scen.loop()
    chart = scen.chart()
    times = np.array([0.1, 0.35, 0.5, 0.8])
    for x in loop.maslov_points[0][:2]:
        assert fd_vs_closed_linearization(loop, chart, x, times) < 1e-5


def test_torus_linearization_is_a_symplectic_loop():
    scen = tor.TorusScenario(2, seed=1)
    loop = scen.loop()
    x = loop.maslov_points[0][0]
    mats = sc.pairs_to_blocks(loop.linearize(scen.chart(), np.linspace(0, 1, 7), x))
    assert sc.symplectic_defect(mats).max() < tor.LINEARIZATION_TOL
    assert np.abs(mats[0] - np.eye(4)).max() < 1e-8 and np.abs(mats[-1] - np.eye(4)).max() < 1e-8


def test_torus_rejects_bad_dimension():
    with pytest.raises(InvalidParameters):
        tor.TorusScenario(0)


# -- Hirzebruch --------------------------------------------------------------


@pytest.fixture(scope="module")
def hz131():
    return hz.HirzebruchScenario(1, 3, 1)


def test_hirzebruch_eps_range(hz131):
    assert max(hz.DEFAULT_LADDER) < hz131.max_epsilon()
    with pytest.raises(InvalidParameters):
        hz131.charts(hz131.max_epsilon() * 1.01)
    with pytest.raises(InvalidParameters):
        hz131.loop(0.05, "phi")


def test_hirzebruch_regions_partition_the_volume(hz131):
    spec = geom.QuadratureSpec()
    total = sum(geom.integrate_volume(r, None, spec).value for r in hz131.regions(0.05).values())
    exact = hz131.trapezoid.mu * (2 * hz131.tau - hz131.k * hz131.mu)
    assert total == pytest.approx(float(exact), rel=1e-12)
    assert geom.integrate_volume(hz131.whole_region(), None, spec).value == \
        pytest.approx(float(exact), rel=1e-12)


@pytest.mark.parametrize("which", ["psi", "psi_tilde"])
def test_kappa_from_normalization_quadrature(hz131, which):
    spec = geom.QuadratureSpec()
    axis = 0 if which == "psi" else 2
    whole = hz131.whole_region()
    vol = geom.integrate_volume(whole, None, spec).value
    mean = geom.integrate_volume(whole, lambda x: TWO_PI * x[..., axis], spec).value / vol
    assert mean == pytest.approx(float(hz131.kappa(which)), rel=1e-12)


@pytest.mark.parametrize("params", [(1, 3, 1), (2, 5, 1)])
def test_r01_winds_once_negatively(params):
    scen = hz.HirzebruchScenario(*params)
    atlas, chains, phases, _ = scen.build(0.05)
    spec = geom.QuadratureSpec(order=6, circle_samples=512)
    for chain in chains:
        sampling = geom.sample_chain(chain, phases[chain.pair], spec, atlas.manifold)
        assert set(np.round(sampling.windings()).astype(int)) == {-1}, chain.name


@pytest.mark.parametrize("params, eps", [((1, 3, 1), 0.0125), ((2, 5, 1), 0.05),
                                         ((2, 5, 1), 0.0125)])
def test_hirzebruch_phase_modes_agree(params, eps):
    scen = hz.HirzebruchScenario(*params)
    _, chains, phases, _ = scen.build(eps)
    rng = np.random.default_rng(17)
    for chain in chains:
        c = rng.uniform(*chain.circle, 100)
        u = np.stack([rng.uniform(lo, hi, 100) for lo, hi in chain.box], -1)
        pts = chain.embed(chain.params(c, u))
        ph = phases[chain.pair]
        diff = np.abs(ph(pts, "closed-form") - ph(pts, "finite-difference"))
        assert diff.max() < 1e-5, chain.name


@pytest.mark.parametrize("which", ["psi", "psi_tilde"])
def test_hirzebruch_linearization_matches_differences(hz131, which):
    loop = hz131.loop(0.05, which)
    times = np.linspace(0, 1, 7)
    for chart in hz131.charts(0.05):
        for x in loop.maslov_points[chart.id]:
            assert fd_vs_closed_linearization(loop, chart, x, times) < 1e-5, chart.name


def test_hirzebruch_flow_preserves_the_moment_map(hz131):
    loop = hz131.loop(0.05, "psi")
    x = hz131.whole_region().nodes(3)[0]
    moved = loop.flow(0.3, x)
    assert np.array_equal(moved[:, [0, 2]], x[:, [0, 2]])
    assert np.allclose(loop.hamiltonian(0.3, moved), loop.hamiltonian(0.0, x))


# -- certificates ------------------------------------------------------------


def test_certificates_name_the_violation(hz131):
    spec = geom.QuadratureSpec(order=8)
    atlas, _, _, loop = hz131.build(0.05, "psi", spec)
    samples = hz131.whole_region().nodes(3)[0]

    half = replace(loop, flow=lambda t, x: loop.flow(t / 2, x))
    with pytest.raises(CertificateFailure, match="closed loop"):
        certify_closed(half, samples)

    def drift(t, x):
        y = np.array(x, dtype=float)
        y[..., 0] = y[..., 0] * (1 - 0.999 * math.sin(math.pi * t))
        return y

    with pytest.raises(CertificateFailure, match="invariance"):
        certify_invariant_charts(replace(loop, flow=drift), atlas, samples)

    shifted = replace(loop, hamiltonian=lambda t, x: loop.hamiltonian(t, x) + 0.1)
    with pytest.raises(CertificateFailure, match="normalization") as info:
        certify_normalized(shifted, hz131.whole_region(), spec)
    assert info.value.certificate == "normalization"

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamloop import geom
from hamloop import invariant as inv
from hamloop import symp_core as sc
from hamloop.errors import (
    MissingInvarianceCertificate,
    NonConstantBoundaryHamiltonian,
    NotClosed,
)
from hamloop.scenarios import hirzebruch as hz
from hamloop.scenarios import sphere as sph
from hamloop.scenarios import torus as tor

TWO_PI = 2 * math.pi
LOW = geom.QuadratureSpec(order=8, circle_samples=512, time_order=4)
EPS = 0.05


@pytest.fixture(scope="module")
def sphere_build():
    return sph.SphereScenario(0.3).build()


@pytest.fixture(scope="module")
def hz_builds():
    scen = hz.HirzebruchScenario(1, 3, 1)
    return {w: scen.build(EPS, w, LOW) for w in ("psi", "psi_tilde")}


def identity_loop(manifold, charts, points):
    def lin(chart, t, x):
        return np.broadcast_to(np.eye(2 * manifold.n), (len(t), 2 * manifold.n, 2 * manifold.n))

    return inv.HamiltonianLoopModel(
        manifold, lambda t, x: np.asarray(x, dtype=float),
        lambda t, x: np.zeros(np.shape(x)[:-1]), frozenset(c.id for c in charts),
        points, lin, True, "identity")


# -- sphere ---------------------------------------------------------------


def test_sphere_invariant_is_zero(sphere_build):
    atlas, chains, phases, loop = sphere_build
    rep = inv.compute_invariant(atlas, loop, chains, phases)
    assert [c.maslov for c in rep.chart_terms] == [1, -1]
    assert abs(rep.total) < 1e-6
    assert rep.chart_terms[0].volume == pytest.approx(TWO_PI * (1 + math.sin(0.3)), rel=1e-12)
    assert rep.pair_terms[0].value == pytest.approx(-2 * TWO_PI * math.sin(0.3), rel=1e-9)


def test_sphere_chern_pairing(sphere_build):
    atlas, chains, phases, _ = sphere_build
    assert inv.chern_pairing(atlas, chains, phases, geom.QuadratureSpec()) == \
        pytest.approx(2, abs=1e-4)


def test_torus_chern_pairing_is_empty_sum():
    atlas, chains, phases, _ = tor.TorusScenario(1, 0).build()
    assert inv.chern_pairing(atlas, chains, phases, geom.QuadratureSpec()) == 0


def test_bookkeeping_identity_is_exact(sphere_build, hz_builds):
    reports = []
    atlas, chains, phases, loop = sphere_build
    reports.append(inv.compute_invariant(atlas, loop, chains, phases))
    for atlas, chains, phases, loop in hz_builds.values():
        reports.append(inv.compute_invariant(atlas, loop, chains, phases, LOW))
    for rep in reports:
        assert rep.bookkeeping_defect() == 0


def test_identity_loop_gives_exact_zero(sphere_build, hz_builds):
    atlas, chains, phases, loop = sphere_build
    ident = identity_loop(atlas.manifold, atlas.charts, loop.maslov_points)
    rep = inv.compute_invariant(atlas, ident, chains, phases)
    assert rep.total == 0 and all(c.maslov == 0 for c in rep.chart_terms)

    atlas, chains, phases, loop = hz_builds["psi"]
    ident = identity_loop(atlas.manifold, atlas.charts, loop.maslov_points)
    rep = inv.compute_invariant(atlas, ident, chains, phases, LOW)
    assert rep.total == 0 and all(p.value == 0 for p in rep.pair_terms)


def test_sphere_reversal_negates_every_term(sphere_build):
    atlas, chains, phases, loop = sphere_build
    fwd = inv.compute_invariant(atlas, loop, chains, phases)
    back = inv.compute_invariant(atlas, loop.reversed(), chains, phases)
    assert [c.maslov for c in back.chart_terms] == [-1, 1]
    assert back.pair_terms[0].value == pytest.approx(-fwd.pair_terms[0].value, rel=1e-12)
    assert abs(back.total + fwd.total) < 1e-9


def test_sphere_doubling_doubles_maslov_indices(sphere_build):
    atlas, chains, phases, loop = sphere_build
    rep = inv.compute_invariant(atlas, loop.doubled(), chains, phases)
    assert [c.maslov for c in rep.chart_terms] == [2, -2]
    assert abs(rep.total) < 1e-6


def test_missing_certificates_are_rejected(sphere_build):
    atlas, chains, phases, loop = sphere_build
    with pytest.raises(MissingInvarianceCertificate):
        inv.compute_invariant(atlas, replace(loop, invariant_charts=frozenset({0})), chains, phases)
    with pytest.raises(MissingInvarianceCertificate):
        inv.compute_invariant(atlas, replace(loop, maslov_points={0: loop.maslov_points[0]}),
                              chains, phases)
    with pytest.raises(MissingInvarianceCertificate):
        inv.compute_invariant(replace(atlas, regions={0: atlas.regions[0]}), loop, chains, phases)


def test_open_linearization_is_not_a_loop(sphere_build):
    atlas, chains, phases, loop = sphere_build

    def half_turn(chart, t, x):
        return np.stack([sc.rotation(math.pi * s) for s in np.atleast_1d(t)])

    with pytest.raises(NotClosed):
        inv.compute_invariant(atlas, replace(loop, linearization=half_turn), chains, phases)


def test_chart_order_is_by_declared_id(sphere_build, hz_builds):
    atlas, chains, phases, loop = sphere_build
    swapped = inv.Atlas(atlas.manifold, tuple(reversed(atlas.charts)), atlas.regions)
    assert inv.compute_invariant(swapped, loop, chains, phases).total == \
        inv.compute_invariant(atlas, loop, chains, phases).total

    atlas, chains, phases, loop = hz_builds["psi"]
    rng = np.random.default_rng(4)
    shuffled = inv.Atlas(atlas.manifold, tuple(rng.permutation(atlas.charts)), atlas.regions)
    assert [c.id for c in shuffled.charts] == list(range(5))
    a = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    b = inv.compute_invariant(shuffled, loop, chains, phases, LOW)
    assert abs(a.total - b.total) <= 2 * a.error + 1e-12


def test_duplicate_chart_ids_rejected(sphere_build):
    atlas = sphere_build[0]
    with pytest.raises(ValueError):
        inv.Atlas(atlas.manifold, atlas.charts + atlas.charts[:1], atlas.regions)


@pytest.mark.parametrize("which", ["psi", "psi_tilde"])
def test_hirzebruch_linearization_modes_agree(hz_builds, which):
    atlas, chains, phases, loop = hz_builds[which]
    closed = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    fd = inv.compute_invariant(atlas, loop, chains, phases, LOW,
                               linearization_mode="finite-difference")
    assert [c.maslov for c in fd.chart_terms] == [c.maslov for c in closed.chart_terms]
    assert abs(fd.total - closed.total) <= 2 * closed.error + 1e-12


def test_sphere_linearization_modes_agree(sphere_build):
    atlas, chains, phases, loop = sphere_build
    a = inv.compute_invariant(atlas, loop, chains, phases)
    b = inv.compute_invariant(atlas, loop, chains, phases, linearization_mode="finite-difference")
    assert abs(a.total - b.total) <= 2 * a.error + 1e-12


def test_hirzebruch_doubled_loop_doubles_the_invariant(hz_builds):
    atlas, chains, phases, loop = hz_builds["psi"]
    single = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    double = inv.compute_invariant(atlas, loop.doubled(), chains, phases, LOW)
    assert [c.maslov for c in double.chart_terms] == [2 * c.maslov for c in single.chart_terms]
    assert abs(double.total - 2 * single.total) <= 2 * (double.error + 2 * single.error) + 1e-9


@pytest.mark.parametrize("which", ["psi", "psi_tilde"])
def test_hirzebruch_reversal_negates_the_invariant(hz_builds, which):
    atlas, chains, phases, loop = hz_builds[which]
    fwd = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    back = inv.compute_invariant(atlas, loop.reversed(), chains, phases, LOW)
    assert abs(back.total + fwd.total) <= 2 * fwd.error + 1e-9


def test_time_quadrature_matches_collapsed_form(hz_builds):
    atlas, chains, phases, loop = hz_builds["psi_tilde"]
    rep = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    for p in rep.pair_terms:
        assert p.value == pytest.approx(p.collapsed, rel=1e-12, abs=1e-12)


def test_quadrature_doubling_within_error_estimate(hz_builds):
    atlas, chains, phases, loop = hz_builds["psi"]
    base = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    fine = inv.compute_invariant(atlas, loop, chains, phases, LOW.scaled(2))
    assert abs(fine.total - base.total) <= base.error + 1e-9


# -- Chern pairing on the Hirzebruch atlas --------------------------------


def test_hirzebruch_chern_pairing_converges_in_eps():
    scen = hz.HirzebruchScenario(1, 3, 1)
    ladder = (0.05, 0.025, 0.0125)
    values = []
    for eps in ladder:
        atlas, chains, phases, _ = scen.build(eps, "psi", LOW)
        values.append(inv.chern_pairing(atlas, chains, phases, LOW))
    fitted = abs(values[0] - values[1]) / ladder[0]
    print(f"chern pairing ladder {values}, fitted C = {fitted:.4f}")
    assert abs(values[1] - values[2]) <= fitted * ladder[1]
    assert abs(values[-1] - 7) < 0.01
    # the uncovered corners of the atlas cost O(eps^2), not O(eps)
    assert inv.fit_in_eps_squared(ladder, values) == pytest.approx(7, abs=1e-4)


# -- corollaries and the integrable formula --------------------------------


@pytest.mark.parametrize("eps_hat", [0.1, 0.3, 0.5, 0.8, 1.2])
def test_two_chart_corollary_on_the_sphere(eps_hat):
    s = math.sin(eps_hat)
    samples = np.full(16, TWO_PI * s)
    value = inv.corollary_two_charts(1, -1, TWO_PI * (1 + s), TWO_PI * (1 - s), 1, TWO_PI * s, 2,
                                     boundary_samples=samples)
    assert abs(value) < 1e-12


def test_two_chart_corollary_trivial_cases():
    assert inv.corollary_two_charts(3, -2, 1.5, 0.25, 2, 9.0, 0.0) == 3 * 1.5 - 2 * 0.25
    assert inv.corollary_two_charts(0, 0, 1.5, 0.25, 2, 0.5, 3.0) == -2 * 0.5 * 3.0


def test_two_chart_corollary_rejects_varying_boundary_values():
    samples = 1.0 + 1e-3 * np.sin(np.linspace(0, TWO_PI, 32))
    with pytest.raises(NonConstantBoundaryHamiltonian):
        inv.corollary_two_charts(1, -1, 1.0, 1.0, 1, 1.0, 2, boundary_samples=samples)
    with pytest.raises(NonConstantBoundaryHamiltonian):
        inv.corollary_two_charts(1, -1, 1.0, 1.0, 1, 2.0, 2, boundary_samples=np.ones(8))


def test_punctured_corollary():
    assert abs(inv.corollary_punctured(1, 4 * math.pi, 1, TWO_PI, 2)) < 1e-12
    assert inv.corollary_punctured(2, 3.0, 1, 0.0, 5.0) == 6.0
    assert inv.corollary_punctured(0, 3.0, 2, 0.5, 5.0) == -5.0


def test_integrable_formula_with_zero_hamiltonian():
    data = sph.SphereScenario(0.3).polar_cap_data()
    res = inv.integrable_invariant(data, lambda x: np.zeros(x.shape[:-1]), 1,
                                   geom.QuadratureSpec(), sph.MANIFOLD)
    assert res.total == 0


def test_integrable_formula_on_polar_caps():
    data = sph.SphereScenario(0.3).polar_cap_data(0.2)
    f = lambda x: sph.hamiltonian(0.0, x)
    res = inv.integrable_invariant(data, f, 1, geom.QuadratureSpec(), sph.MANIFOLD)
    # equal phase integrals on the two boundary circles, opposite values of f
    assert res.unweighted[0] == pytest.approx(res.unweighted[1], rel=1e-9)
    assert res.weighted[0] == pytest.approx(-res.weighted[1], rel=1e-9)
    assert abs(res.total) < 1e-9
    assert res.chern == pytest.approx(2, abs=1e-6)


def test_integrable_formula_matches_pair_terms_on_hirzebruch(hz_builds):
    atlas, chains, phases, loop = hz_builds["psi"]
    rep = inv.compute_invariant(atlas, loop, chains, phases, LOW)
    data = [(c, phases[c.pair]) for c in chains]
    res = inv.integrable_invariant(data, lambda x: loop.hamiltonian(0.0, x), 2, LOW,
                                   atlas.manifold)
    assert rep.chart_terms[0].maslov == 0
    assert res.total == pytest.approx(sum(p.value for p in rep.pair_terms), rel=1e-10)
    assert res.chern == pytest.approx(inv.chern_pairing(atlas, chains, phases, LOW), rel=1e-12)


# -- ladders ----------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_linear_extrapolation_is_exact_on_lines(a, c):
    eps = [0.05, 0.025, 0.0125]
    ex = inv.extrapolate_linear(eps, [a + c * e for e in eps])
    assert ex.value == pytest.approx(a, abs=1e-9)
    assert ex.slope == pytest.approx(c, abs=1e-7)
    assert ex.error < 1e-9


def test_eps_squared_fit_is_exact_on_parabolas():
    eps = np.array([0.05, 0.025, 0.0125])
    assert inv.fit_in_eps_squared(eps, 0.3 - 2.0 * eps**2) == pytest.approx(0.3, abs=1e-12)


def test_ladder_must_decrease():
    with pytest.raises(ValueError):
        inv.compute_invariant_ladder(lambda e: None, (0.01, 0.02))
    with pytest.raises(ValueError):
        inv.compute_invariant_ladder(lambda e: None, (0.02, 0.0))
    with pytest.raises(ValueError):
        inv.extrapolate_linear([0.1], [1.0])


def test_check_boundary_constant():
    assert inv.check_boundary_constant(np.full(5, 2.5)) == 2.5
    with pytest.raises(NonConstantBoundaryHamiltonian):
        inv.check_boundary_constant(np.array([1.0, 1.1]))

"""
Evaluators for the Maslov-type invariant of a Hamiltonian loop.

For an ordered atlas B_1..B_m of flow-invariant Darboux charts,

    I = sum_i J_i * vol(B_i minus earlier charts) + sum_{i<k} N_ik,
    N_ik = -(n / 2 pi) int_0^1 dt int_{A_ik} (f_t o psi_t) dgamma ^ omega^(n-1),

where J_i is the Maslov index of the linearised loop in chart i and gamma
is the unwrapped argument of the transition phase r_ik.  The pairing of
c_1 with [omega]^(n-1) is (1 / 2 pi) sum_{i<k} int_{A_ik} dgamma ^ omega^(n-1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import geom
from . import symp_core as sc
from .errors import (
    InsufficientResolution,
    MissingInvarianceCertificate,
    NonConstantBoundaryHamiltonian,
    NotClosed,
)

BOUNDARY_SPREAD_TOL = 1e-6


@dataclass(frozen=True)
class Atlas:
    """Ordered charts plus, for each chart i, the region B_i minus earlier charts."""

    manifold: geom.Manifold
    charts: tuple
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.id for c in self.charts]
        if len(set(ids)) != len(ids):
            raise ValueError("chart ids must be distinct")
        object.__setattr__(self, "charts", tuple(sorted(self.charts, key=lambda c: c.id)))

    def chart(self, cid: int) -> geom.Chart:
        for c in self.charts:
            if c.id == cid:
                return c
        raise KeyError(cid)


@dataclass(frozen=True)
class HamiltonianLoopModel:
    """A loop psi_t with generating Hamiltonian f_t.

    flow(t, x)         -> psi_t(x) for scalar t and points x (..., 2n)
    hamiltonian(t, x)  -> f_t(x)
    linearization(chart, t, x) -> pair-ordered matrices (len(t), 2n, 2n) of the
        inverse linearised flow at psi_t(x) in chart coordinates, or None to
        use finite differences of the flow.
    invariant_charts: ids of charts B with psi_t(B) = B for all t.
    maslov_points: chart id -> sample points used for the Maslov index.
    """

    manifold: geom.Manifold
    flow: Callable
    hamiltonian: Callable
    invariant_charts: frozenset
    maslov_points: dict
    linearization: Optional[Callable] = None
    autonomous: bool = True
    name: str = "loop"
    # integrated linearizations are only symplectic to the ODE tolerance
    linearization_tol: float = sc.SYMPLECTIC_TOL

    def linearize(self, chart: geom.Chart, t: np.ndarray, x: np.ndarray,
                  mode: str = "closed-form") -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if mode == "closed-form" and self.linearization is not None:
            out = self.linearization(chart, t, x)
            if out is not None:
                return np.asarray(out, dtype=float)
        return self.linearize_fd(chart, t, x)

    def linearize_fd(self, chart: geom.Chart, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Inverse of d(coords o psi_t o coords^-1) by central differences."""
        if chart.from_coords is None:
            raise ValueError(f"chart {chart.name} has no inverse coordinate map")
        y = chart.to_coords(np.asarray(x, dtype=float))
        mats = []
        for s in np.atleast_1d(t):
            d = geom.central_jacobian(
                lambda yy: chart.to_coords(self.flow(s, chart.from_coords(yy))), y, chart.periods
            )
            mats.append(d)
        d = sc.pairs_to_blocks(np.stack(mats))
        j = sc.standard_j(d.shape[-1] // 2)
        inv = -j @ np.swapaxes(d, -1, -2) @ j
        return sc.blocks_to_pairs(inv)

    def doubled(self) -> "HamiltonianLoopModel":
        """t -> psi_{2t mod 1}, generated by 2 f_{2t mod 1}."""
        flow, ham, lin = self.flow, self.hamiltonian, self.linearization

        def flow2(t, x):
            return flow((2 * t) % 1.0, x)

        def ham2(t, x):
            return 2 * ham((2 * t) % 1.0, x)

        lin2 = None
        if lin is not None:
            def lin2(chart, t, x):
                return lin(chart, (2 * np.asarray(t)) % 1.0, x)

        return replace(self, flow=flow2, hamiltonian=ham2, linearization=lin2,
                       autonomous=False, name=self.name + " doubled")

    def reversed(self) -> "HamiltonianLoopModel":
        """t -> psi_{1-t}, generated by -f_{1-t}."""
        flow, ham, lin = self.flow, self.hamiltonian, self.linearization

        def flow_r(t, x):
            return flow(1.0 - t, x)

        def ham_r(t, x):
            return -ham(1.0 - t, x)

        lin_r = None
        if lin is not None:
            def lin_r(chart, t, x):
                return lin(chart, 1.0 - np.asarray(t), x)

        return replace(self, flow=flow_r, hamiltonian=ham_r, linearization=lin_r,
                       autonomous=False, name=self.name + " reversed")


@dataclass(frozen=True)
class ChartTerm:
    chart: str
    maslov: int
    residual: float
    volume: float
    volume_error: float

    @property
    def contribution(self) -> float:
        return self.maslov * self.volume


@dataclass(frozen=True)
class PairTerm:
    pair: tuple
    chain: str
    value: float
    error: float
    winding: int
    collapsed: Optional[float] = None


@dataclass(frozen=True)
class InvariantReport:
    chart_terms: tuple
    pair_terms: tuple
    total: float
    error: float
    ladder: tuple = ()
    ladder_totals: tuple = ()
    extrapolated: Optional[dict] = None

    def bookkeeping_defect(self) -> float:
        s = sum(c.contribution for c in self.chart_terms) + sum(p.value for p in self.pair_terms)
        return abs(s - self.total)


# ---------------------------------------------------------------------------


def _phase_for(phases, pair):
    if isinstance(phases, dict):
        return phases[pair]
    for ph in phases:
        if ph.pair == pair:
            return ph
    raise KeyError(pair)


def _real(value: complex, what: str) -> float:
    if abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
        raise InsufficientResolution(f"{what} accumulator is not real: {value}")
    return float(value.real)


def chern_pairing(atlas: Atlas, chains: Sequence[geom.Chain], phases,
                  spec: geom.QuadratureSpec) -> float:
    """(-i / 2 pi) sum over chains of int d log s ^ omega^(n-1)."""
    acc = 0j
    for chain in chains:
        sampling = geom.sample_chain(chain, _phase_for(phases, chain.pair), spec, atlas.manifold)
        acc += sampling.integrate(None)
    return _real(-1j * acc / (2 * math.pi), "pairing")


def _maslov_for_chart(loop: HamiltonianLoopModel, chart: geom.Chart, spec, mode):
    pts = loop.maslov_points.get(chart.id)
    if pts is None or len(pts) == 0:
        raise MissingInvarianceCertificate(f"no Maslov sample points for chart {chart.name}")
    closed = mode == "closed-form" and loop.linearization is not None
    tol = loop.linearization_tol if closed else geom.FD_SYMPLECTIC_TOL
    parabolic = sc._PARABOLIC_TOL if closed else geom.FD_PARABOLIC_TOL
    results = []
    for x in pts:
        x = np.asarray(x, dtype=float)

        def family(t, x=x):
            return sc.pairs_to_blocks(loop.linearize(chart, t, x, mode))

        results.append(sc.maslov_index(family, spec.circle_samples, closure_tol=1e-6,
                                       symplectic_tol=tol, parabolic_tol=parabolic))
    indices = {r.index for r in results}
    if len(indices) != 1:
        raise NotClosed(f"Maslov index differs between sample points of {chart.name}: {indices}")
    return results[0].index, max(r.residual for r in results)


def _pair_value(loop, manifold, chain, phase, spec, cache):
    """N_ik for one chain; also the autonomous shortcut when it applies."""
    n = manifold.n
    sampling = cache.get(chain, phase, spec, manifold)
    tn, tw = geom.gauss_legendre(spec.time_order, 1, 0.0, 1.0)
    acc = 0j
    for t, w in zip(tn, tw):
        acc += w * sampling.integrate(lambda x, t=t: loop.hamiltonian(t, loop.flow(t, x)))
    value = _real(n * 1j * acc / (2 * math.pi), "N term")
    collapsed = None
    if loop.autonomous:
        # f is conserved by its own flow, so the time integral is trivial
        c = sampling.integrate(lambda x: loop.hamiltonian(0.0, x))
        collapsed = _real(n * 1j * c / (2 * math.pi), "N term")
    return value, collapsed, int(np.round(np.median(sampling.windings())))


def compute_invariant(atlas: Atlas, loop: HamiltonianLoopModel, chains: Sequence[geom.Chain],
                      phases, spec: geom.QuadratureSpec = geom.QuadratureSpec(), *,
                      linearization_mode: str = "closed-form",
                      estimate_error: bool = True,
                      cache: Optional[geom.SamplingCache] = None) -> InvariantReport:
    """Evaluate the chart decomposition of I for `loop` on `atlas`.

    Passing the same `cache` to several calls on one atlas reuses the
    transition-phase samplings, which depend on the chains only.
    """
    cache = cache if cache is not None else geom.SamplingCache()
    missing = [c.name for c in atlas.charts if c.id not in loop.invariant_charts]
    if missing:
        raise MissingInvarianceCertificate(f"no invariance certificate for charts {missing}")

    chart_terms = []
    for chart in atlas.charts:
        region = atlas.regions.get(chart.id)
        if region is None:
            raise MissingInvarianceCertificate(f"no region for chart {chart.name}")
        index, residual = _maslov_for_chart(loop, chart, spec, linearization_mode)
        vol = geom.integrate_volume(region, None, spec, estimate_error=estimate_error)
        chart_terms.append(ChartTerm(chart.name, index, residual, vol.value, vol.error))

    coarse = []
    if estimate_error:
        half = lambda **kw: replace(spec, **{k: max(2, v // 2) for k, v in kw.items()})
        coarse = [half(order=spec.order), half(circle_samples=spec.circle_samples),
                  half(time_order=spec.time_order)]
    pair_terms = []
    for chain in chains:
        phase = _phase_for(phases, chain.pair)
        value, collapsed, winding = _pair_value(loop, atlas.manifold, chain, phase, spec, cache)
        err = sum(abs(value - _pair_value(loop, atlas.manifold, chain, phase, s, cache)[0])
                  for s in coarse)
        err += 1e-13 * max(1.0, abs(value))
        pair_terms.append(PairTerm(chain.pair, chain.name, value, float(err), winding, collapsed))

    total = sum(c.contribution for c in chart_terms) + sum(p.value for p in pair_terms)
    error = sum(abs(c.maslov) * c.volume_error for c in chart_terms)
    error += sum(p.error for p in pair_terms)
    return InvariantReport(tuple(chart_terms), tuple(pair_terms), float(total), float(error))


# ---------------------------------------------------------------------------
# epsilon ladders


@dataclass(frozen=True)
class Extrapolation:
    value: float
    slope: float
    error: float


def extrapolate_linear(eps: Sequence[float], values: Sequence[float]) -> Extrapolation:
    """Least-squares line in eps, evaluated at eps = 0.

    The error is the distance to the two-finest-point Richardson value.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.size < 2:
        raise ValueError("need at least two ladder points")
    slope, intercept = np.polyfit(eps, values, 1)
    order = np.argsort(eps)
    e1, e2 = eps[order[0]], eps[order[1]]
    v1, v2 = values[order[0]], values[order[1]]
    richardson = (e2 * v1 - e1 * v2) / (e2 - e1)
    return Extrapolation(float(intercept), float(slope), float(abs(intercept - richardson)))


def fit_in_eps_squared(eps: Sequence[float], values: Sequence[float]) -> float:
    """Intercept of the least-squares fit values ~ a + c * eps^2 (a diagnostic)."""
    eps = np.asarray(eps, dtype=float)
    _, intercept = np.polyfit(eps**2, np.asarray(values, dtype=float), 1)
    return float(intercept)


def compute_invariant_ladder(build: Callable, ladder: Sequence[float],
                             spec: geom.QuadratureSpec = geom.QuadratureSpec(),
                             variants: Optional[Sequence[str]] = None, **kw):
    """Run compute_invariant for each eps and extrapolate every term to eps = 0.

    `build(eps)` returns (atlas, chains, phases, loop).  With `variants`,
    `build(eps, variant)` is called for each variant on a shared sampling
    cache and a dict variant -> report is returned.
    """
    ladder = tuple(float(e) for e in ladder)
    if min(ladder) <= 0 or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be positive and strictly decreasing")
    names = list(variants) if variants is not None else [None]
    reports = {name: [] for name in names}
    for eps in ladder:
        cache = geom.SamplingCache()
        for name in names:
            atlas, chains, phases, loop = build(eps) if name is None else build(eps, name)
            reports[name].append(
                compute_invariant(atlas, loop, chains, phases, spec, cache=cache, **kw))
    out = {name: _extrapolate_reports(ladder, reps) for name, reps in reports.items()}
    return out if variants is not None else out[None]


def _extrapolate_reports(ladder, reports) -> InvariantReport:
    first = reports[0]
    chart_terms = []
    for idx, term in enumerate(first.chart_terms):
        if {r.chart_terms[idx].maslov for r in reports} != {term.maslov}:
            raise NotClosed(f"Maslov index of {term.chart} changes along the ladder")
        ex = extrapolate_linear(ladder, [r.chart_terms[idx].volume for r in reports])
        verr = ex.error + max(r.chart_terms[idx].volume_error for r in reports)
        chart_terms.append(replace(term, volume=ex.value, volume_error=verr,
                                   residual=max(r.chart_terms[idx].residual for r in reports)))
    pair_terms = []
    for idx, term in enumerate(first.pair_terms):
        ex = extrapolate_linear(ladder, [r.pair_terms[idx].value for r in reports])
        perr = ex.error + max(r.pair_terms[idx].error for r in reports)
        collapsed = None
        if term.collapsed is not None:
            collapsed = extrapolate_linear(
                ladder, [r.pair_terms[idx].collapsed for r in reports]).value
        pair_terms.append(replace(term, value=ex.value, error=perr, collapsed=collapsed))

    total = sum(c.contribution for c in chart_terms) + sum(p.value for p in pair_terms)
    totals = tuple(r.total for r in reports)
    ex_total = extrapolate_linear(ladder, totals)
    error = ex_total.error + max(r.error for r in reports)
    return InvariantReport(tuple(chart_terms), tuple(pair_terms), float(total), float(error),
                           ladder=tuple(ladder), ladder_totals=totals,
                           extrapolated={"value": ex_total.value, "slope": ex_total.slope,
                                         "error": ex_total.error,
                                         "eps_squared_fit": fit_in_eps_squared(ladder, totals)})


# ---------------------------------------------------------------------------
# corollaries and the integrable-system formula


def check_boundary_constant(values: np.ndarray, tol: float = BOUNDARY_SPREAD_TOL) -> float:
    """Return the common value of samples of the time-averaged Hamiltonian."""
    values = np.asarray(values, dtype=float)
    scale = max(1.0, float(np.max(np.abs(values))))
    spread = float(np.max(values) - np.min(values))
    if spread > tol * scale:
        raise NonConstantBoundaryHamiltonian(f"spread {spread:.3e} along the common boundary")
    return float(np.mean(values))


def corollary_two_charts(J_U: int, J_V: int, vol_U: float, vol_V_minus_U: float, n: int,
                         k_const: float, chern: float, boundary_samples=None) -> float:
    """Two-chart formula when int (f_t o psi_t) dt is the constant k_const on the boundary."""
    if boundary_samples is not None:
        k_sampled = check_boundary_constant(boundary_samples)
        if abs(k_sampled - k_const) > BOUNDARY_SPREAD_TOL * max(1.0, abs(k_const)):
            raise NonConstantBoundaryHamiltonian(
                f"sampled boundary value {k_sampled} differs from {k_const}")
    return J_U * vol_U + J_V * vol_V_minus_U - n * k_const * chern


def corollary_punctured(J_U: int, total_volume: float, n: int, f_at_q_integral: float,
                        chern: float) -> float:
    """Formula for a chart whose complement is a fixed point q of the loop."""
    return J_U * total_volume - n * f_at_q_integral * chern


@dataclass(frozen=True)
class IntegrableResult:
    total: float
    chern: float
    weighted: tuple  # z'_j per chain
    unweighted: tuple  # z_j per chain


def integrable_invariant(tubular_chain_data: Sequence[tuple], f: Callable, n: int,
                         spec: geom.QuadratureSpec, manifold: geom.Manifold) -> IntegrableResult:
    """Sum of z'_j = (-i / 2 pi) int (-n f) d log r ^ omega^(n-1) over the given chains.

    Also returns the unweighted sum of z_j, which should equal the Chern pairing.
    """
    zp, z = [], []
    for chain, phase in tubular_chain_data:
        sampling = geom.sample_chain(chain, phase, spec, manifold)
        zp.append(_real(-1j * sampling.integrate(lambda x: -n * np.asarray(f(x))) / (2 * math.pi),
                        "weighted"))
        z.append(_real(-1j * sampling.integrate(None) / (2 * math.pi), "unweighted"))
    return IntegrableResult(float(sum(zp)), float(sum(z)), tuple(zp), tuple(z))

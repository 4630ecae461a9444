"""Hirzebruch surfaces M_{k, tau, mu} and the two circle actions on them.

Model coordinates are the action-angle coordinates (p1, phi1, p2, phi2) of
the open dense torus orbit, with omega = dp1 ^ dphi1 + dp2 ^ dphi2.  The
moment coordinates of the trapezoid are y = 2 pi p1 and x = 2 pi p2, and the
four toric divisors are the zero sets of

    |z1|^2 / 2 = p1,            |z2|^2 / 2 = p2,
    |z3|^2 / 2 = mu/2pi - p1,   |z4|^2 / 2 = tau/2pi - k p1 - p2.

Chart 0 is {all |z_j| >= eps} in the model coordinates.  Chart j >= 1 is a
neighbourhood of {z_j = 0} with Cartesian coordinates for z_j, obtained from
an integral affine change of the action-angle variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction

import numpy as np

from .. import geom, toric
from ..errors import InvalidParameters
from ..invariant import Atlas, HamiltonianLoopModel, compute_invariant_ladder
from . import ScenarioBuild, certify_closed, certify_invariant_charts, certify_normalized
from .. import symp_core as sc

TWO_PI = 2 * math.pi
DEFAULT_LADDER = (0.05, 0.025, 0.0125)
MODEL_PERIODS = (None, TWO_PI, None, TWO_PI)


@dataclass(frozen=True)
class ToricChart:
    """Chart coordinates: action-angle variables A = L x + c, then polar pairs made Cartesian."""

    linear: np.ndarray  # 4x4 integral symplectic matrix in pair order
    offset: np.ndarray
    polar: tuple  # indices of pairs converted to Cartesian coordinates

    def actions(self, x):
        return x @ self.linear.T + self.offset

    def to_coords(self, x):
        a = self.actions(np.asarray(x, dtype=float))
        out = np.array(a, copy=True)
        for i in self.polar:
            r = np.sqrt(np.maximum(2 * a[..., 2 * i], 0.0))
            out[..., 2 * i] = r * np.cos(a[..., 2 * i + 1])
            out[..., 2 * i + 1] = r * np.sin(a[..., 2 * i + 1])
        return out

    def from_coords(self, y):
        a = np.array(y, dtype=float, copy=True)
        for i in self.polar:
            u, v = y[..., 2 * i], y[..., 2 * i + 1]
            a[..., 2 * i] = (u * u + v * v) / 2
            a[..., 2 * i + 1] = np.arctan2(v, u)
        return (a - self.offset) @ np.linalg.inv(self.linear).T

    def model_from_chart_jacobian(self, x):
        """d(model coordinates) / d(chart coordinates) at model points x."""
        a = self.actions(np.asarray(x, dtype=float))
        inv_polar = np.broadcast_to(np.eye(4), a.shape[:-1] + (4, 4)).copy()
        for i in self.polar:
            r = np.sqrt(2 * a[..., 2 * i])
            c, s = np.cos(a[..., 2 * i + 1]), np.sin(a[..., 2 * i + 1])
            # inverse of d(X, Y)/d(action, angle)
            inv_polar[..., 2 * i, 2 * i] = r * c
            inv_polar[..., 2 * i, 2 * i + 1] = r * s
            inv_polar[..., 2 * i + 1, 2 * i] = -s / r
            inv_polar[..., 2 * i + 1, 2 * i + 1] = c / r
        return np.linalg.inv(self.linear) @ inv_polar

    def angle_rates(self, model_rates):
        """Angular speeds of the chart's angle variables under a model angle translation."""
        return self.linear @ np.asarray(model_rates, dtype=float)


def _toric_charts(k: int, tau: float, mu: float) -> list:
    a, b = mu / TWO_PI, tau / TWO_PI
    eye = np.eye(4)
    l2 = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]], float)
    l3 = np.array([[-1, 0, 0, 0], [0, -1, 0, k], [-k, 0, -1, 0], [0, 0, 0, -1]], float)
    l4 = np.array([[1, 0, 0, 0], [0, 1, 0, -k], [-k, 0, -1, 0], [0, 0, 0, -1]], float)
    z = np.zeros(4)
    return [
        ToricChart(eye, z, ()),
        ToricChart(eye, z, (0,)),
        ToricChart(l2, np.array([0, 0, a, 0]), (0,)),
        ToricChart(l3, np.array([a, 0, b, 0]), (0,)),
        ToricChart(l4, np.array([0, 0, b, 0]), (1,)),
    ]


CHART_LABELS = (
    ("p1", "phi1", "p2", "phi2"),
    ("x1", "y1", "p2", "phi2"),
    ("x2", "y2", "q3", "xi3"),
    ("x3", "y3", "q4", "chi4"),
    ("p1", "zeta1", "x4", "y4"),
)

# rotation speeds (d phi1/dt, d phi2/dt) of the two loops, in turns per unit time
LOOP_RATES = {"psi": (0.0, 1.0, 0.0, 0.0), "psi_tilde": (0.0, 0.0, 0.0, 1.0)}


@dataclass(frozen=True)
class HirzebruchScenario:
    k: int = 1
    tau: Fraction = Fraction(3)
    mu: Fraction = Fraction(1)

    def __post_init__(self):
        trap = toric.DelzantTrapezoid(self.k, self.tau, self.mu)
        object.__setattr__(self, "tau", trap.tau)
        object.__setattr__(self, "mu", trap.mu)

    @property
    def trapezoid(self) -> toric.DelzantTrapezoid:
        return toric.DelzantTrapezoid(self.k, self.tau, self.mu)

    @property
    def manifold(self) -> geom.Manifold:
        return geom.Manifold(f"M(k={self.k}, tau={self.tau}, mu={self.mu})", 2, MODEL_PERIODS)

    # squared radii |z_j|^2 as functions of model points

    def radii_sq(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p1, p2 = x[..., 0], x[..., 2]
        a, b = float(self.mu) / TWO_PI, float(self.tau) / TWO_PI
        return 2 * np.stack([p1, p2, a - p1, b - self.k * p1 - p2], axis=-1)

    def max_epsilon(self) -> float:
        return 0.25 * math.sqrt(min(float(self.mu), float(self.trapezoid.lam)) / math.pi)

    def _check_eps(self, eps: float) -> None:
        if not 0 < eps < self.max_epsilon():
            raise InvalidParameters(f"eps must lie in (0, {self.max_epsilon():.4g})")

    # charts, regions and chains

    def charts(self, eps: float) -> tuple:
        self._check_eps(eps)
        toric_charts = _toric_charts(self.k, float(self.tau), float(self.mu))
        e2 = eps * eps
        out = []
        for j, tc in enumerate(toric_charts):
            if j == 0:
                level = lambda x: np.min(self.radii_sq(x), axis=-1) - e2
                periods = MODEL_PERIODS
            else:
                level = lambda x, j=j: e2 - self.radii_sq(x)[..., j - 1]
                periods = tuple(TWO_PI if (a % 2 == 1 and a // 2 not in tc.polar) else None
                                for a in range(4))
            name = "B0" if j == 0 else f"B'{j}"
            out.append(geom.Chart(j, name, 2, tc.to_coords, level, tc.from_coords,
                                  periods=periods, labels=CHART_LABELS[j]))
        return tuple(out)

    def regions(self, eps: float) -> dict:
        """Chart j minus the union of the earlier charts, in model coordinates."""
        a, b, k = float(self.mu) / TWO_PI, float(self.tau) / TWO_PI, self.k
        h = eps * eps / 2
        top = lambda pts: b - k * pts[:, 0]
        angles = ((1, 0.0, TWO_PI), (3, 0.0, TWO_PI))
        dims = {
            0: ((0, h, a - h), (2, h, lambda p: top(p) - h)),
            1: ((0, 0.0, h), (2, 0.0, top)),
            2: ((0, h, a), (2, 0.0, h)),
            3: ((0, a - h, a), (2, h, top)),
            4: ((0, h, a - h), (2, lambda p: top(p) - h, top)),
        }
        names = {0: "B0", 1: "B'1 minus B0", 2: "B'2 minus earlier", 3: "B'3 minus earlier",
                 4: "B'4 minus earlier"}
        return {j: geom.Region(names[j], 2, d + angles) for j, d in dims.items()}

    def chains(self, eps: float) -> list:
        """The boundary pieces A'_0j = {|z_j| = eps, |z_r| > eps for r != j}.

        Parameters (alpha, P, beta): alpha is the angle of the Cartesian pair of
        chart j, P and beta the remaining action and angle of that chart.
        """
        a, b, k = float(self.mu) / TWO_PI, float(self.tau) / TWO_PI, self.k
        h = eps * eps / 2

        def stack(*cols):
            return np.stack(np.broadcast_arrays(*cols), axis=-1)

        def e1(p):
            return stack(h, p[..., 0], p[..., 1], p[..., 2])

        def e2(p):
            return stack(a - p[..., 1], -p[..., 2], h, p[..., 0])

        p1_3 = a - h

        def e3(p):
            return stack(p1_3, -k * p[..., 2] - p[..., 0], b - k * p1_3 - p[..., 1], -p[..., 2])

        def e4(p):
            return stack(p[..., 1], p[..., 2] - k * p[..., 0], b - k * p[..., 1] - h, -p[..., 0])

        circle = (0.0, TWO_PI)
        return [
            geom.Chain("A'01", (0, 1), e1, ((h, b - (k + 1) * h), circle), orientation_sign=-1),
            geom.Chain("A'02", (0, 2), e2, ((h, a - h), circle), orientation_sign=-1),
            geom.Chain("A'03", (0, 3), e3, ((h, b - k * p1_3 - h), circle), orientation_sign=-1),
            geom.Chain("A'04", (0, 4), e4, ((h, a - h), circle), orientation_sign=-1),
        ]

    def phases(self, charts: tuple, mode_override: str | None = None) -> dict:
        """Transition phases r_0j; closed form for r_01, Jacobian differences otherwise."""
        toric_charts = _toric_charts(self.k, float(self.tau), float(self.mu))
        out = {}
        for j in range(1, 5):
            mode = "closed-form" if j == 1 else "finite-difference"
            out[(0, j)] = geom.TransitionPhase(
                charts[0], charts[j], toric_charts[j].model_from_chart_jacobian,
                mode_override or mode)
        return out

    # loops

    def kappa(self, which: str = "psi") -> Fraction:
        trap = self.trapezoid
        return toric.kappa(trap) if which == "psi" else toric.kappa_tilde(trap)

    def loop(self, eps: float, which: str = "psi") -> HamiltonianLoopModel:
        if which not in LOOP_RATES:
            raise InvalidParameters(f"unknown loop {which!r}")
        rates = np.array(LOOP_RATES[which])
        kap = float(self.kappa(which))
        axis = 0 if which == "psi" else 2
        toric_charts = _toric_charts(self.k, float(self.tau), float(self.mu))

        shift = TWO_PI * rates

        def flow(t, x):
            return np.asarray(x, dtype=float) + t * shift

        def hamiltonian(t, x):
            return TWO_PI * np.asarray(x)[..., axis] - kap

        def linearization(chart, t, x):
            # the loop translates chart angles; polar pairs rotate rigidly
            tc = toric_charts[chart.id]
            speed = tc.angle_rates(rates)
            t = np.atleast_1d(t)
            mats = np.broadcast_to(np.eye(4), t.shape + (4, 4)).copy()
            for i in tc.polar:
                ang = -TWO_PI * speed[2 * i + 1] * t
                c, s = np.cos(ang), np.sin(ang)
                mats[:, 2 * i, 2 * i], mats[:, 2 * i, 2 * i + 1] = c, -s
                mats[:, 2 * i + 1, 2 * i], mats[:, 2 * i + 1, 2 * i + 1] = s, c
            return mats

        return HamiltonianLoopModel(self.manifold, flow, hamiltonian, frozenset(range(5)),
                                    self.maslov_points(eps), linearization, True, which)

    def maslov_points(self, eps: float, per_chart: int = 2, seed: int = 3) -> dict:
        """Sample points in each chart's region, away from the region's edges."""
        rng = np.random.default_rng(seed)
        out = {}
        for j, region in self.regions(eps).items():
            pts, _ = region.nodes(4)
            pick = rng.choice(pts.shape[0], size=per_chart, replace=False)
            out[j] = pts[pick]
        return out

    @lru_cache(maxsize=8)
    def _geometry(self, eps: float):
        charts = self.charts(eps)
        manifold = self.manifold
        atlas = Atlas(manifold, charts, self.regions(eps))
        chains = geom.build_overlap_chains(charts, self.chains(eps), manifold)
        return atlas, chains, self.phases(charts)

    def build(self, eps: float, which: str = "psi",
              spec: geom.QuadratureSpec = geom.QuadratureSpec()) -> ScenarioBuild:
        """Atlas, chains and phases for one eps (shared between the two loops)."""
        atlas, chains, phases = self._geometry(eps)
        loop = self.loop(eps, which)
        samples = self.whole_region().nodes(3)[0]
        certify_closed(loop, samples)
        certify_invariant_charts(loop, atlas, samples)
        certify_normalized(loop, self.whole_region(), spec)
        return ScenarioBuild(atlas, list(chains), phases, loop)

    def whole_region(self) -> geom.Region:
        a, b, k = float(self.mu) / TWO_PI, float(self.tau) / TWO_PI, self.k
        return geom.Region("M", 2, ((0, 0.0, a), (2, 0.0, lambda p: b - k * p[:, 0]),
                                    (1, 0.0, TWO_PI), (3, 0.0, TWO_PI)))


def parse_rational(text) -> Fraction:
    return toric.as_fraction(text)


def hirzebruch_expected(k: int, tau, mu) -> dict:
    trap = toric.DelzantTrapezoid(k, parse_rational(tau), parse_rational(mu))
    i_psi, i_tilde = toric.closed_form_invariants(trap)
    return {
        "kappa": toric.kappa(trap),
        "kappa_tilde": toric.kappa_tilde(trap),
        "N": toric.boundary_terms(trap),
        "N_tilde": toric.boundary_terms_tilde(trap),
        "I_psi": i_psi,
        "I_psi_tilde": i_tilde,
        "ratio": Fraction(-k, 2),
        "chern": toric.chern_number(trap),
        "maslov_psi": (0, 1, 0, -1, 0),
        "maslov_psi_tilde": (0, 0, 1, k, -1),
    }


def build(scenario: HirzebruchScenario, eps: float = DEFAULT_LADDER[-1], which: str = "psi",
          spec=geom.QuadratureSpec()) -> ScenarioBuild:
    return scenario.build(eps, which, spec)


@lru_cache(maxsize=16)
def ladder_reports(scenario: HirzebruchScenario, ladder=DEFAULT_LADDER,
                   spec: geom.QuadratureSpec = geom.QuadratureSpec()) -> dict:
    """Extrapolated reports for both loops, keyed "psi" and "psi_tilde"."""
    def build_one(eps, which):
        return scenario.build(eps, which, spec)

    return compute_invariant_ladder(build_one, ladder, spec, variants=tuple(LOOP_RATES))

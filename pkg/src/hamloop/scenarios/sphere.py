"""Rotation of the round sphere of area 4 pi.

Model coordinates are (phi, z) with omega = dphi ^ dz.  The loop rotates phi
by 2 pi t and is generated by f = -2 pi z.  The two charts are the Lambert
coordinates centred at the north pole (U) and at the south pole (V).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import geom
from .. import symp_core as sc
from ..errors import InvalidParameters
from ..invariant import Atlas, HamiltonianLoopModel, check_boundary_constant
from . import ScenarioBuild, certify_closed, certify_invariant_charts, certify_normalized

TWO_PI = 2 * math.pi
MANIFOLD = geom.Manifold("S2", 1, (TWO_PI, None))


def _north(x):
    r = np.sqrt(np.maximum(2 * (1 - x[..., 1]), 0.0))
    return np.stack([r * np.cos(x[..., 0]), r * np.sin(x[..., 0])], axis=-1)


def _north_inv(y):
    u = y[..., 0] ** 2 + y[..., 1] ** 2
    return np.stack([np.arctan2(y[..., 1], y[..., 0]), 1 - u / 2], axis=-1)


def _south(x):
    r = np.sqrt(np.maximum(2 * (1 + x[..., 1]), 0.0))
    return np.stack([r * np.cos(x[..., 0]), -r * np.sin(x[..., 0])], axis=-1)


def _south_inv(y):
    u = y[..., 0] ** 2 + y[..., 1] ** 2
    return np.stack([-np.arctan2(y[..., 1], y[..., 0]), u / 2 - 1], axis=-1)


def north_from_south_jacobian(x):
    """d(north coords)/d(south coords): X = s X', Y = -s Y' with s = sqrt((4-u)/u)."""
    y = _south(x)
    a, b = y[..., 0], y[..., 1]
    u = a * a + b * b
    s = np.sqrt(4 - u) / np.sqrt(u)
    ds = -2 * u ** -1.5 / np.sqrt(4 - u)
    jac = np.empty(x.shape[:-1] + (2, 2))
    jac[..., 0, 0] = s + 2 * a * a * ds
    jac[..., 0, 1] = 2 * a * b * ds
    jac[..., 1, 0] = -2 * a * b * ds
    jac[..., 1, 1] = -s - 2 * b * b * ds
    return jac


def hamiltonian(t, x):
    return -TWO_PI * np.asarray(x)[..., 1]


def flow(t, x):
    x = np.array(x, dtype=float, copy=True)
    x[..., 0] = (x[..., 0] + TWO_PI * t) % TWO_PI
    return x


@dataclass(frozen=True)
class SphereScenario:
    epsilon_hat: float = 0.3

    def __post_init__(self):
        if not 0 < self.epsilon_hat < math.pi / 2:
            raise InvalidParameters("epsilon_hat must lie in (0, pi/2)")

    @property
    def boundary_height(self) -> float:
        return -math.sin(self.epsilon_hat)

    def charts(self):
        s = math.sin(self.epsilon_hat)
        u = geom.Chart(0, "U", 1, _north, lambda x: x[..., 1] + s, _north_inv,
                       labels=("X", "Y"))
        v = geom.Chart(1, "V", 1, _south, lambda x: s - x[..., 1], _south_inv,
                       labels=("X'", "Y'"))
        return u, v

    def chain(self) -> geom.Chain:
        z0 = self.boundary_height

        def embed(p):
            return np.stack([p[..., 0] % TWO_PI, np.full(p.shape[:-1], z0)], axis=-1)

        return geom.Chain("boundary parallel of U", (0, 1), embed, box=(), orientation_sign=1)

    def regions(self) -> dict:
        z0 = self.boundary_height
        return {
            0: geom.Region("U", 1, ((1, z0, 1.0), (0, 0.0, TWO_PI))),
            1: geom.Region("V minus U", 1, ((1, -1.0, z0), (0, 0.0, TWO_PI))),
        }

    def loop(self, n_points: int = 5, seed: int = 0) -> HamiltonianLoopModel:
        rng = np.random.default_rng(seed)
        z0 = self.boundary_height
        # U = {z > z0} and V = {z < -z0}, sampled away from their edges
        frac = rng.uniform(0.05, 0.95, (2, n_points))
        pts_u = np.stack([rng.uniform(0, TWO_PI, n_points), z0 + (1 - z0) * frac[0]], -1)
        pts_v = np.stack([rng.uniform(0, TWO_PI, n_points), -1 + (1 - z0) * frac[1]], -1)

        def linearization(chart, t, x):
            # both charts are linear rotations of the loop; U turns by +2 pi t, V by -2 pi t
            sign = 1.0 if chart.id == 0 else -1.0
            return np.stack([sc.rotation(-sign * TWO_PI * s) for s in np.atleast_1d(t)])

        return HamiltonianLoopModel(MANIFOLD, flow, hamiltonian, frozenset({0, 1}),
                                    {0: pts_u, 1: pts_v}, linearization, True, "sphere rotation")

    def build(self, spec: geom.QuadratureSpec = geom.QuadratureSpec()) -> ScenarioBuild:
        u, v = self.charts()
        atlas = Atlas(MANIFOLD, (u, v), self.regions())
        chains = geom.build_overlap_chains(atlas.charts, [self.chain()], MANIFOLD)
        phases = {(0, 1): geom.TransitionPhase(u, v, north_from_south_jacobian)}
        loop = self.loop()

        rng = np.random.default_rng(1)
        samples = np.stack([rng.uniform(0, TWO_PI, 200), rng.uniform(-1, 1, 200)], -1)
        certify_closed(loop, samples)
        certify_invariant_charts(loop, atlas, samples)
        whole = geom.Region("S2", 1, ((1, -1.0, 1.0), (0, 0.0, TWO_PI)))
        certify_normalized(loop, whole, spec)
        self.boundary_value(loop)
        return ScenarioBuild(atlas, chains, phases, loop)

    def boundary_value(self, loop=None, samples: int = 64) -> float:
        """The constant value of int (f_t o psi_t) dt on the boundary parallel."""
        loop = loop or self.loop()
        phi = np.linspace(0, TWO_PI, samples, endpoint=False)
        pts = np.stack([phi, np.full(samples, self.boundary_height)], -1)
        tn, tw = geom.gauss_legendre(16, 1, 0.0, 1.0)
        vals = sum(w * loop.hamiltonian(t, loop.flow(t, pts)) for t, w in zip(tn, tw))
        return check_boundary_constant(vals)

    # the integrable-system picture: polar caps as tubular neighbourhoods

    def polar_cap_data(self, eta: float = 0.1):
        """Chains on the boundary of the band |z| <= 1 - eta with band-to-cap phases."""
        if not 0 < eta < 1:
            raise InvalidParameters("eta must lie in (0, 1)")
        h = 1 - eta
        band = geom.Chart(0, "band", 1, lambda x: np.array(x, dtype=float),
                          lambda x: h - np.abs(x[..., 1]), lambda y: np.array(y, dtype=float),
                          periods=(TWO_PI, None), labels=("phi", "z"))
        north = geom.Chart(1, "north cap", 1, _north, lambda x: x[..., 1] - h, _north_inv)
        south = geom.Chart(2, "south cap", 1, _south, lambda x: -h - x[..., 1], _south_inv)

        def at(z0):
            return lambda p: np.stack([p[..., 0] % TWO_PI, np.full(p.shape[:-1], z0)], -1)

        chains = [geom.Chain("top of band", (0, 1), at(h), orientation_sign=-1),
                  geom.Chain("bottom of band", (0, 2), at(-h), orientation_sign=1)]
        geom.build_overlap_chains((band, north, south), chains, MANIFOLD)
        return [(chains[0], geom.TransitionPhase(band, north, mode="finite-difference")),
                (chains[1], geom.TransitionPhase(band, south, mode="finite-difference"))]


def sphere_expected() -> dict:
    return {"J_U": 1, "J_V": -1, "I": 0, "chern": 2}


def build(scenario: SphereScenario = SphereScenario(), spec=geom.QuadratureSpec()) -> ScenarioBuild:
    return scenario.build(spec)

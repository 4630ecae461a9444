"""Loops on the torus R^2n / Z^2n from reparameterised autonomous flows.

psi_t is the time-A(t) flow of a zero-mean trigonometric polynomial g, with
A(t) = (1 - cos 2 pi t) / 2, so the loop is generated by f_t = A'(t) g and
returns to the identity at t = 1.  The single chart is the fundamental
domain in the model coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .. import geom
from .. import symp_core as sc
from ..errors import InvalidParameters
from ..invariant import Atlas, HamiltonianLoopModel, compute_invariant
from . import ScenarioBuild, certify_closed, certify_invariant_charts, certify_normalized

TWO_PI = 2 * math.pi
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
LINEARIZATION_TOL = 1e-7


def reparameterization(t):
    return (1 - np.cos(TWO_PI * np.asarray(t))) / 2


def reparameterization_rate(t):
    return math.pi * np.sin(TWO_PI * np.asarray(t))


@dataclass(frozen=True)
class TrigHamiltonian:
    """g(x) = sum_m a_m cos(2 pi m.x) + b_m sin(2 pi m.x) over nonzero frequencies m."""

    freqs: np.ndarray  # (K, 2n) integers
    a: np.ndarray
    b: np.ndarray

    @classmethod
    def random(cls, n: int, seed: int, terms: int = 3, max_freq: int = 2) -> "TrigHamiltonian":
        rng = np.random.default_rng(seed)
        freqs = []
        while len(freqs) < terms:
            m = rng.integers(-max_freq, max_freq + 1, size=2 * n)
            if m.any():
                freqs.append(m)
        amp = 0.15 / terms
        return cls(np.array(freqs, dtype=float), amp * rng.standard_normal(terms),
                   amp * rng.standard_normal(terms))

    def _phase(self, x):
        return TWO_PI * np.asarray(x) @ self.freqs.T

    def __call__(self, x):
        ph = self._phase(x)
        return np.cos(ph) @ self.a + np.sin(ph) @ self.b

    def gradient(self, x):
        ph = self._phase(x)
        coeff = -np.sin(ph) * self.a + np.cos(ph) * self.b
        return TWO_PI * coeff @ self.freqs

    def hessian(self, x):
        ph = self._phase(x)
        coeff = -(np.cos(ph) * self.a + np.sin(ph) * self.b) * TWO_PI**2
        return np.einsum("...k,ki,kj->...ij", coeff, self.freqs, self.freqs)


def _pair_j(dim: int) -> np.ndarray:
    return sc.pair_j(dim // 2)


@dataclass
class TorusScenario:
    n: int = 1
    seed: int = 0
    terms: int = 3
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameters("n must be positive")
        self.g = TrigHamiltonian.random(self.n, self.seed, self.terms)
        self.manifold = geom.Manifold(f"T^{2 * self.n}", self.n, (1.0,) * (2 * self.n))
        self._j = _pair_j(2 * self.n)

    # flow of g and its variational equation

    def _rhs(self, s, y, count):
        dim = 2 * self.n
        x = y[: count * dim].reshape(count, dim)
        m = y[count * dim:].reshape(count, dim, dim)
        # X = -J grad g and its derivative -J Hess g
        xdot = -(self._j @ self.g.gradient(x)[..., None])[..., 0]
        mdot = -self._j @ self.g.hessian(x) @ m
        return np.concatenate([xdot.ravel(), mdot.ravel()])

    def solution(self, points: np.ndarray):
        """Dense solution of the flow and its derivative for s in [0, 1]."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        key = points.tobytes()
        if key not in self._cache:
            count, dim = points.shape
            y0 = np.concatenate([points.ravel(), np.tile(np.eye(dim), (count, 1, 1)).ravel()])
            sol = solve_ivp(self._rhs, (0.0, 1.0), y0, method="DOP853", dense_output=True,
                            rtol=ODE_RTOL, atol=ODE_ATOL, args=(count,))
            if not sol.success:
                raise RuntimeError(sol.message)
            self._cache[key] = sol.sol
        return self._cache[key]

    def _evaluate(self, s, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        count, dim = points.shape
        y = self.solution(points)(np.atleast_1d(s))  # (state, len(s))
        x = y[: count * dim].T.reshape(-1, count, dim)
        m = y[count * dim:].T.reshape(-1, count, dim, dim)
        return x, m

    def flow(self, t, x):
        x = np.asarray(x, dtype=float)
        s = float(reparameterization(t))
        if s == 0.0:
            return np.array(x, copy=True)
        out, _ = self._evaluate(s, x.reshape(-1, x.shape[-1]))
        return out[0].reshape(x.shape)

    def hamiltonian(self, t, x):
        return reparameterization_rate(t) * self.g(x)

    def linearization(self, chart, t, x):
        """Inverse of D psi_t at x, in pair order (the chart is the model)."""
        _, m = self._evaluate(reparameterization(t), np.asarray(x).reshape(1, -1))
        m = m[:, 0]
        j = self._j
        return -j @ np.swapaxes(m, -1, -2) @ j

    # atlas and loop

    def chart(self) -> geom.Chart:
        dim = 2 * self.n
        ident = lambda x: np.array(x, dtype=float)
        return geom.Chart(0, "fundamental domain", self.n, ident,
                          lambda x: np.ones(np.shape(x)[:-1]), ident,
                          periods=(1.0,) * dim,
                          labels=tuple(f"{c}{i + 1}" for i in range(self.n) for c in "qp"))

    def region(self) -> geom.Region:
        return geom.Region("fundamental domain", self.n,
                           tuple((a, 0.0, 1.0) for a in range(2 * self.n)))

    def loop(self, n_points: int = 5, seed: int = 1) -> HamiltonianLoopModel:
        pts = np.random.default_rng(seed + 1000 * self.seed).uniform(0, 1, (n_points, 2 * self.n))
        return HamiltonianLoopModel(self.manifold, self.flow, self.hamiltonian, frozenset({0}),
                                    {0: pts}, self.linearization, False,
                                    f"torus n={self.n} seed={self.seed}", LINEARIZATION_TOL)

    def build(self, spec: geom.QuadratureSpec = geom.QuadratureSpec()) -> ScenarioBuild:
        chart = self.chart()
        atlas = Atlas(self.manifold, (chart,), {0: self.region()})
        loop = self.loop()
        samples = np.random.default_rng(7).uniform(0, 1, (16, 2 * self.n))
        certify_closed(loop, samples, tol=1e-8)
        certify_invariant_charts(loop, atlas, samples, times=(0.3, 0.5))
        certify_normalized(loop, self.region(), spec, times=(0.25,))
        return ScenarioBuild(atlas, [], {}, loop)


def torus_expected() -> dict:
    return {"J": 0, "I": 0}


def build(scenario: TorusScenario, spec=geom.QuadratureSpec()) -> ScenarioBuild:
    return scenario.build(spec)


@lru_cache(maxsize=64)
def invariant_report(n: int, seed: int, terms: int = 3,
                     spec: geom.QuadratureSpec = geom.QuadratureSpec()):
    """compute_invariant for the generated loop with parameters (n, seed, terms)."""
    atlas, chains, phases, loop = TorusScenario(n, seed, terms).build(spec)
    return compute_invariant(atlas, loop, chains, phases, spec)

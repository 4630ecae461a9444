"""Concrete Hamiltonian loops with their atlases, chains and expected values."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .. import geom
from ..errors import CertificateFailure
from ..invariant import Atlas, HamiltonianLoopModel


class ScenarioBuild(NamedTuple):
    atlas: Atlas
    chains: list
    phases: dict
    loop: HamiltonianLoopModel


def certify_closed(loop: HamiltonianLoopModel, points: np.ndarray, tol: float = 1e-9) -> None:
    periods = loop.manifold.periods
    for t in (0.0, 1.0):
        gap = np.abs(geom.wrap(loop.flow(t, points) - points, periods)).max()
        if gap > tol:
            raise CertificateFailure("closed loop", f"|psi_{t:g} - id| = {gap:.3e}")


def certify_invariant_charts(loop: HamiltonianLoopModel, atlas: Atlas, points: np.ndarray,
                             times=np.linspace(0.0, 1.0, 9), tol: float = 1e-9) -> None:
    """Each chart region is mapped into itself at sampled points and times."""
    for chart in atlas.charts:
        if chart.id not in loop.invariant_charts:
            continue
        before = chart.level(points)
        for t in times:
            after = chart.level(loop.flow(t, points))
            moved = (np.sign(before) != np.sign(after)) & (np.abs(before) > tol)
            if np.any(moved):
                raise CertificateFailure(f"invariance of chart {chart.name}")


def certify_normalized(loop: HamiltonianLoopModel, region: geom.Region, spec: geom.QuadratureSpec,
                       times=(0.0, 0.37, 0.81), tol: float = 1e-8) -> None:
    vol = geom.integrate_volume(region, None, spec, estimate_error=False).value
    for t in times:
        mean = geom.integrate_volume(region, lambda x, t=t: loop.hamiltonian(t, x), spec,
                                     estimate_error=False).value
        if abs(mean) > tol * vol:
            raise CertificateFailure("normalization", f"int f omega^n = {mean:.3e} at t = {t}")

"""
Darboux charts, overlap chains and the integrals built from them.

Every scenario fixes a *model* coordinate system on its manifold: 2n real
coordinates in pair order (q1, p1, q2, p2, ...) with omega = sum dq_i ^ dp_i,
some of them periodic.  Points are arrays of shape (..., 2n) in model
coordinates.  A chart is a second Darboux system, given by maps between model
points and chart coordinates (again in pair order).

Orientation of the manifold is the one for which omega^n is positive; in
model coordinates that is the coordinate orientation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import symp_core as sc
from ._parallel import chunked_apply
from .errors import InsufficientResolution, NonSymplecticJacobian, ValidationFailure

FD_STEP = 1e-6
# difference Jacobians carry ~1e-9 entry errors; toric transitions are exactly
# parabolic in the shared action direction, and an error d moves u = tr by ~20 d
FD_PARABOLIC_TOL = 1e-7
FD_SYMPLECTIC_TOL = 1e-5
CLOSED_FORM_SYMPLECTIC_TOL = 1e-7

PointFn = Callable[[np.ndarray], np.ndarray]


def wrap(delta: np.ndarray, periods: Sequence[Optional[float]]) -> np.ndarray:
    """Reduce differences in periodic coordinates to the symmetric range."""
    out = np.array(delta, dtype=float, copy=True)
    for a, per in enumerate(periods):
        if per:
            out[..., a] = out[..., a] - per * np.round(out[..., a] / per)
    return out


def central_jacobian(fn: PointFn, x: np.ndarray, periods=(), h: float = FD_STEP,
                     accuracy: int = 2) -> np.ndarray:
    """d fn / d x by central differences; x has shape (..., d), result (..., m, d).

    accuracy 4 uses the five-point stencil with the same step.
    """
    if accuracy not in (2, 4):
        raise ValueError("accuracy must be 2 or 4")
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]

    def diff(step):
        out = fn(x + step) - fn(x - step)
        return wrap(out, periods) if periods else out

    cols = []
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        if accuracy == 2:
            cols.append(diff(e) / (2 * h))
        else:
            cols.append((8 * diff(e) - diff(2 * e)) / (12 * h))
    return np.stack(cols, axis=-1)


def omega_pairs(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """omega(u, v) for pair-ordered Darboux coordinates."""
    return np.sum(u[..., 0::2] * v[..., 1::2] - u[..., 1::2] * v[..., 0::2], axis=-1)


def pfaffian(w: np.ndarray) -> np.ndarray:
    """Pfaffian of a stack of antisymmetric matrices (small sizes)."""
    size = w.shape[-1]
    if size == 0:
        return np.ones(w.shape[:-2])
    if size % 2:
        return np.zeros(w.shape[:-2])
    if size == 2:
        return w[..., 0, 1]
    total = np.zeros(w.shape[:-2])
    rest = list(range(1, size))
    for j, col in enumerate(rest):
        keep = [r for r in rest if r != col]
        minor = w[..., keep, :][..., :, keep]
        total = total + (-1) ** j * w[..., 0, col] * pfaffian(minor)
    return total


@dataclass(frozen=True)
class Manifold:
    name: str
    n: int
    periods: tuple = ()  # period of each model coordinate, or None

    def __post_init__(self):
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * (2 * self.n))
        if len(self.periods) != 2 * self.n:
            raise ValueError("one period entry per model coordinate")


@dataclass(frozen=True)
class Chart:
    """A Darboux chart B_i with its ordinal `id`.

    `level(x)` is positive inside the chart's region, zero on its boundary.
    `from_coords` may be omitted; it is only needed for finite-difference
    transition Jacobians where this chart is the source of the coordinate change.
    """

    id: int
    name: str
    n: int
    to_coords: PointFn
    level: PointFn
    from_coords: Optional[PointFn] = None
    periods: tuple = ()
    labels: tuple = ()
    orientation_sign: int = 1

    def __post_init__(self):
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * (2 * self.n))
        if self.orientation_sign not in (1, -1):
            raise ValueError("orientation_sign must be +1 or -1")

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        return self.level(x) >= -tol


@dataclass(frozen=True)
class Chain:
    """A parameterised (2n-1)-chain A_ik on the boundary of chart `pair[0]`.

    Parameters are (c, u_1, ..., u_{2n-2}); c runs over `circle` and is the
    direction along which the transition phase winds, u_a over `box`.
    `orientation_sign` is the sign of the parameter frame relative to the
    boundary orientation of chart pair[0] (outward normal first).
    """

    name: str
    pair: tuple
    embed: PointFn
    box: tuple = ()
    circle: tuple = (0.0, 2 * math.pi)
    orientation_sign: int = 1
    circle_index: int = 0

    @property
    def dim(self) -> int:
        return len(self.box) + 1

    def reversed(self) -> "Chain":
        return replace(self, orientation_sign=-self.orientation_sign)

    def params(self, c: np.ndarray, u: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        u = np.asarray(u, dtype=float).reshape(c.shape + (len(self.box),))
        return np.insert(u, self.circle_index, c, axis=-1)

    def tangents(self, params: np.ndarray, periods) -> np.ndarray:
        """Model-coordinate tangent vectors per parameter, shape (..., dim, 2n)."""
        return np.swapaxes(central_jacobian(self.embed, params, periods), -1, -2)


# ---------------------------------------------------------------------------
# transition phases


def _to_blocks_checked(jac_pairs: np.ndarray, tol: float) -> np.ndarray:
    blocks = sc.pairs_to_blocks(jac_pairs)
    sc.check_symplectic(blocks, tol, exc=NonSymplecticJacobian)
    return blocks


def fd_transition_jacobian(chart_i: Chart, chart_k: Chart, points: np.ndarray,
                           h: float = FD_STEP) -> np.ndarray:
    """d(coords_i)/d(coords_k) in pair order by central differences."""
    if chart_k.from_coords is None:
        raise ValueError(f"chart {chart_k.name} has no inverse coordinate map")
    y = chart_k.to_coords(points)

    def change(yy):
        return chart_i.to_coords(chart_k.from_coords(yy))

    return central_jacobian(change, y, chart_i.periods, h)


@dataclass(frozen=True)
class TransitionPhase:
    """r_ik = rho(d coords_i / d coords_k) on the overlap of charts i and k.

    `jacobian(points)` gives the closed-form pair-ordered Jacobian when known.
    """

    source: Chart
    target: Chart
    jacobian: Optional[PointFn] = None
    mode: str = "closed-form"

    def __post_init__(self):
        if self.mode not in ("closed-form", "finite-difference"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "closed-form" and self.jacobian is None:
            object.__setattr__(self, "mode", "finite-difference")

    @property
    def pair(self) -> tuple:
        return (self.source.id, self.target.id)

    def with_mode(self, mode: str) -> "TransitionPhase":
        return replace(self, mode=mode)

    def jacobian_blocks(self, points: np.ndarray, mode: Optional[str] = None) -> np.ndarray:
        mode = mode or self.mode
        if mode == "closed-form":
            if self.jacobian is None:
                raise ValueError("no closed-form Jacobian for this pair")
            return _to_blocks_checked(self.jacobian(points), CLOSED_FORM_SYMPLECTIC_TOL)
        return _to_blocks_checked(
            fd_transition_jacobian(self.source, self.target, points), FD_SYMPLECTIC_TOL
        )

    def __call__(self, points: np.ndarray, mode: Optional[str] = None) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, points.shape[-1])

        def evaluate(chunk):
            fd = (mode or self.mode) == "finite-difference"
            return sc.rho_batch(self.jacobian_blocks(chunk, mode), check=False,
                                parabolic_tol=FD_PARABOLIC_TOL if fd else sc._PARABOLIC_TOL)

        return chunked_apply(evaluate, flat).reshape(points.shape[:-1])


def transition_phase_from_jacobian(chart_i: Chart, chart_j: Chart, point, mode="closed-form",
                                   jacobian: Optional[PointFn] = None):
    """rho of the coordinate change from chart_j to chart_i at `point` (model coords)."""
    pts = np.asarray(point, dtype=float)
    if chart_i is chart_j or (chart_i.id == chart_j.id and chart_i.name == chart_j.name):
        return np.ones(pts.shape[:-1], dtype=complex) if pts.ndim > 1 else 1.0 + 0j
    phase = TransitionPhase(chart_i, chart_j, jacobian, mode)
    out = phase(pts)
    return out if pts.ndim > 1 else complex(out)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 16
    circle_samples: int = sc.DEFAULT_SAMPLES
    max_depth: int = sc.MAX_REFINE_DEPTH
    time_order: int = 16
    cells: int = 1

    def __post_init__(self):
        for name in ("order", "circle_samples", "time_order"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.cells < 1 or self.max_depth < 0:
            raise ValueError("cells >= 1 and max_depth >= 0 required")

    def scaled(self, factor: float) -> "QuadratureSpec":
        return replace(
            self,
            order=max(2, int(round(self.order * factor))),
            circle_samples=max(2, int(round(self.circle_samples * factor))),
            time_order=max(2, int(round(self.time_order * factor))),
        )


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error: float


def gauss_legendre(order: int, cells: int, lo, hi):
    """Composite Gauss-Legendre nodes and weights on [lo, hi] (broadcasting)."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, cells + 1)
    ref = np.concatenate([edges[i] + (edges[i + 1] - edges[i]) * (x + 1) / 2 for i in range(cells)])
    refw = np.concatenate([(edges[i + 1] - edges[i]) * w / 2 for i in range(cells)])
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    return lo + (hi - lo) * ref, (hi - lo) * refw


def _box_nodes(box, order: int, cells: int):
    """Tensor-product nodes (m, d) and weights (m,) on a rectangular box."""
    nodes = np.zeros((1, 0))
    weights = np.ones(1)
    for lo, hi in box:
        x, w = gauss_legendre(order, cells, lo, hi)
        nodes = np.concatenate(
            [np.repeat(nodes, x.size, axis=0), np.tile(x, nodes.shape[0])[:, None]], axis=1
        )
        weights = np.repeat(weights, x.size) * np.tile(w, weights.size)
    return nodes, weights


@dataclass
class ChainSampling:
    """Unwrapped phase increments of a transition phase along a chain.

    Built once per (chain, phase, spec); `integrate(weight)` is then cheap,
    which is what the time quadrature in the invariant formula needs.
    """

    chain: Chain
    rows: np.ndarray
    c_mid: np.ndarray
    log_increments: np.ndarray  # complex log of consecutive phase ratios
    density: np.ndarray  # orientation * omega^p density at each piece
    u_nodes: np.ndarray
    u_weights: np.ndarray

    _points: Optional[np.ndarray] = field(default=None, repr=False)
    _base: Optional[tuple] = field(default=None, repr=False)
    _starts: Optional[np.ndarray] = field(default=None, repr=False)

    def points(self) -> np.ndarray:
        if self._points is None:
            self._points = self.chain.embed(self.chain.params(self.c_mid, self.u_nodes[self.rows]))
        return self._points

    def integrate(self, weight: Optional[PointFn] = None) -> complex:
        """sum over pieces of weight * (d log phase) * density, as a complex number."""
        if self._base is None:
            base = self.log_increments * self.density
            self._base = (base.real.copy(), base.imag.copy())
            self._starts = np.flatnonzero(np.r_[True, self.rows[1:] != self.rows[:-1]])
        re, im = self._base
        if weight is not None:
            w = np.asarray(weight(self.points()), dtype=float)
            re, im = re * w, im * w
        # fixed-order reduction: per-row sums, then the box quadrature
        weights = self.u_weights[self.rows[self._starts]]
        return complex(np.dot(np.add.reduceat(re, self._starts), weights),
                       np.dot(np.add.reduceat(im, self._starts), weights))

    def windings(self) -> np.ndarray:
        """Winding of the phase around the circle at every box node."""
        per_row = np.bincount(self.rows, weights=self.log_increments.imag,
                              minlength=self.u_weights.size)
        return np.round(per_row / (2 * np.pi)).astype(int)


def sample_chain(chain: Chain, phase: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec,
                 manifold: Manifold, *, product_tol: float = 1e-6) -> ChainSampling:
    """Sample `phase` along the circle direction of `chain` at every box node."""
    u_nodes, u_weights = _box_nodes(chain.box, spec.order, spec.cells)
    m = u_nodes.shape[0]
    c0, c1 = chain.circle
    grid = np.linspace(c0, c1, spec.circle_samples + 1)

    params = chain.params(np.broadcast_to(grid, (m, grid.size)),
                          np.repeat(u_nodes[:, None, :], grid.size, axis=1))
    values = phase(chain.embed(params))
    if np.any(np.abs(values[:, -1] - values[:, 0]) > 1e-8):
        raise ValidationFailure(f"phase along {chain.name} is not periodic in the circle parameter")

    steps = np.angle(values[:, 1:] / values[:, :-1])
    bad = np.abs(steps) >= sc.MAX_PHASE_STEP
    rows_g, cols_g = np.nonzero(~bad)
    pieces_r = [rows_g]
    pieces_a = [grid[cols_g]]
    pieces_b = [grid[cols_g + 1]]
    pieces_va = [values[rows_g, cols_g]]
    pieces_vb = [values[rows_g, cols_g + 1]]
    if bad.any():
        rb, cb = np.nonzero(bad)

        def evaluate(c, r):
            return phase(chain.embed(chain.params(c, u_nodes[r])))

        r, a, b, va, vb = sc.refine_increments(
            evaluate, grid[cb], grid[cb + 1], values[rb, cb], values[rb, cb + 1], rb,
            max_depth=spec.max_depth,
        )
        pieces_r.append(r)
        pieces_a.append(a)
        pieces_b.append(b)
        pieces_va.append(va)
        pieces_vb.append(vb)
    rows = np.concatenate(pieces_r)
    a = np.concatenate(pieces_a)
    b = np.concatenate(pieces_b)
    logs = np.log(np.concatenate(pieces_vb) / np.concatenate(pieces_va))
    order = np.lexsort((a, rows))
    rows, a, b, logs = rows[order], a[order], b[order], logs[order]
    c_mid = 0.5 * (a + b)

    # omega^p density of the box directions; product structure required
    pts = chain.params(c_mid, u_nodes[rows])
    tang = chain.tangents(pts, manifold.periods)
    ci = chain.circle_index
    others = [d for d in range(chain.dim) if d != ci]
    circ = tang[:, ci, :]
    if others:
        mixed = np.stack([omega_pairs(circ, tang[:, d, :]) for d in others], axis=-1)
        scale = 1.0 + np.abs(tang).max()
        if np.max(np.abs(mixed)) > product_tol * scale ** 2:
            raise ValidationFailure(
                f"omega pairs the circle direction of {chain.name} with other parameters"
            )
        t_other = tang[:, others, :]
        w = omega_pairs(t_other[:, :, None, :], t_other[:, None, :, :])
        p = len(others) // 2
        dens = math.factorial(p) * pfaffian(w)
    else:
        dens = np.ones(rows.size)
    dens = dens * chain.orientation_sign * (-1) ** ci
    return ChainSampling(chain, rows, c_mid, logs, dens, u_nodes, u_weights)


class SamplingCache:
    """Reuse chain samplings across weights, loops and error estimates."""

    def __init__(self):
        self._store = {}

    def get(self, chain: Chain, phase, spec: QuadratureSpec, manifold: Manifold) -> ChainSampling:
        key = (id(chain), id(phase), spec.order, spec.circle_samples, spec.max_depth, spec.cells)
        hit = self._store.get(key)
        if hit is None or hit[0] is not chain or hit[1] is not phase:
            hit = (chain, phase, sample_chain(chain, phase, spec, manifold))
            self._store[key] = hit
        return hit[2]


def integrate_weighted_phase_form(chain: Chain, weight: Optional[PointFn], phase, power: int,
                                  spec: QuadratureSpec, manifold: Manifold,
                                  *, estimate_error: bool = True) -> IntegralResult:
    """Integral over `chain` of weight * d(arg phase) ^ omega^power.

    The circle direction carries the phase increments (midpoint weights);
    the remaining parameters use tensor Gauss-Legendre.  The error estimate
    compares against half the orders in each direction separately.
    """
    if 2 * power != len(chain.box):
        raise ValueError(f"power {power} does not match chain dimension {chain.dim}")

    def run(s):
        raw = sample_chain(chain, phase, s, manifold).integrate(weight)
        if abs(raw.real) > 1e-9 * max(1.0, abs(raw.imag)):
            raise InsufficientResolution(f"phase increments off the unit circle: {raw}")
        return raw.imag

    value = run(spec)
    if not estimate_error:
        return IntegralResult(value, 0.0)
    coarse_q = replace(spec, order=max(2, spec.order // 2))
    coarse_n = replace(spec, circle_samples=max(2, spec.circle_samples // 2))
    err = abs(value - run(coarse_q)) + abs(value - run(coarse_n)) + 1e-13 * max(1.0, abs(value))
    return IntegralResult(value, err)


# ---------------------------------------------------------------------------
# volumes


@dataclass(frozen=True)
class Region:
    """Iterated region in model coordinates.

    `dims` is a sequence of (axis, lo, hi); lo and hi are numbers or callables
    of the partial point array (k, 2n) holding the axes fixed so far.
    """

    name: str
    n: int
    dims: tuple

    def nodes(self, order: int, cells: int = 1):
        pts = np.zeros((1, 2 * self.n))
        wts = np.ones(1)
        for axis, lo, hi in self.dims:
            lo_v = lo(pts) if callable(lo) else np.full(pts.shape[0], float(lo))
            hi_v = hi(pts) if callable(hi) else np.full(pts.shape[0], float(hi))
            x, w = gauss_legendre(order, cells, lo_v, hi_v)
            q = x.shape[-1]
            pts = np.repeat(pts, q, axis=0)
            pts[:, axis] = x.reshape(-1)
            wts = np.repeat(wts, q) * w.reshape(-1)
        return pts, wts


def integrate_volume(region: Region, weight: Optional[PointFn], spec: QuadratureSpec,
                     *, estimate_error: bool = True) -> IntegralResult:
    """Integral of weight * omega^n over a region given in Darboux model coordinates."""
    nfact = math.factorial(region.n)

    def run(order):
        pts, wts = region.nodes(order, spec.cells)
        vals = wts if weight is None else wts * np.asarray(weight(pts), dtype=float)
        return nfact * float(np.sum(vals))

    value = run(spec.order)
    if not estimate_error:
        return IntegralResult(value, 0.0)
    err = abs(value - run(max(2, spec.order // 2))) + 1e-13 * max(1.0, abs(value))
    return IntegralResult(value, err)


# ---------------------------------------------------------------------------
# chain validation


def induced_orientation(chain: Chain, outward: np.ndarray, params: np.ndarray,
                        periods) -> np.ndarray:
    """sign det[outward normal, parameter tangents] at the given parameters."""
    tang = chain.tangents(params, periods)
    frame = np.concatenate([outward[..., None, :], tang], axis=-2)
    return np.sign(np.linalg.det(frame))


def build_overlap_chains(charts: Sequence[Chart], declared: Sequence[Chain],
                         manifold: Manifold, *, samples: int = 64, seed: int = 0,
                         tol: float = 1e-9) -> list:
    """Validate the declared chains A_ik and return them ordered by (i, k).

    Each chain must lie on the boundary of chart i, inside chart k, outside
    every chart r < k other than i, and carry the boundary orientation of
    chart i.  Raises ValidationFailure otherwise.
    """
    by_id = {c.id: c for c in charts}
    rng = np.random.default_rng(seed)
    out = []
    for chain in declared:
        i, k = chain.pair
        if not i < k:
            raise ValidationFailure(f"{chain.name}: chain pairs must satisfy i < k")
        if i not in by_id or k not in by_id:
            raise ValidationFailure(f"{chain.name}: unknown chart in pair {chain.pair}")
        c = rng.uniform(*chain.circle, size=samples)
        u = np.stack([rng.uniform(lo, hi, size=samples) for lo, hi in chain.box], axis=-1) \
            if chain.box else np.zeros((samples, 0))
        params = chain.params(c, u)
        x = chain.embed(params)
        if np.max(np.abs(by_id[i].level(x))) > tol:
            raise ValidationFailure(f"{chain.name}: points off the boundary of chart {i}")
        if not np.all(by_id[k].level(x) > -tol):
            raise ValidationFailure(f"{chain.name}: points outside chart {k}")
        for r in range(k):
            if r != i and r in by_id and np.any(by_id[r].level(x) > tol):
                raise ValidationFailure(f"{chain.name}: points inside earlier chart {r}")
        grad = central_jacobian(lambda y: by_id[i].level(y)[..., None], x, ())[..., 0, :]
        signs = induced_orientation(chain, -grad, params, manifold.periods)
        if not np.all(signs == chain.orientation_sign):
            raise ValidationFailure(f"{chain.name}: declared orientation disagrees with boundary")
        d = wrap(x[1:] - x[:-1], manifold.periods)
        if np.any(np.linalg.norm(d, axis=-1) < 1e-12):
            raise ValidationFailure(f"{chain.name}: parameterisation is not injective")
        out.append(chain)
    return sorted(out, key=lambda ch: ch.pair)

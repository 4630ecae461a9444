"""
Symplectic linear algebra on Sp(2n, R).

Conventions
-----------
Matrices act on R^{2n} with the block-ordered basis (q_1..q_n, p_1..p_n) and
the standard form J = [[0, I], [-I, 0]]; M is symplectic when M^T J M = J.
Charts in the scenarios list coordinates as conjugate pairs
(q_1, p_1, q_2, p_2, ...); use `pairs_to_blocks` before handing such
Jacobians to `rho`.

The circle map `rho` is the spectral one: the product of the first-kind
eigenvalues on the unit circle times (-1)^(m_minus/2), where m_minus counts
negative real eigenvalues.  An eigenvalue lambda with eigenvector z is of the
first kind when Im(conj(z)^T J z) < 0.  With this sign the rotation
[[cos a, -sin a], [sin a, cos a]] maps to e^{ia}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSpectrum, InsufficientResolution, NonSymplectic, NotClosed

SYMPLECTIC_TOL = 1e-9
DET_TOL = 1e-8
EIG_CLUSTER_TOL = 1e-9
CIRCLE_TOL = 1e-6
# rows whose palindromic roots come this close to the unit circle go through eig
_SCREEN_MARGIN = 1e-6
# roots within this (relative) distance of +-2 count as +-1 exactly
_PARABOLIC_TOL = 1e-12
_CLUSTER_GROUP_TOL = 1e-6
_KREIN_TOL = 1e-10

DEFAULT_SAMPLES = 2048
MAX_REFINE_DEPTH = 12
MAX_PHASE_STEP = np.pi / 2
MAX_MASLOV_RESIDUAL = 0.05


def standard_j(n: int) -> np.ndarray:
    """J = [[0, I], [-I, 0]] of size 2n."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def pair_j(n: int) -> np.ndarray:
    """Standard form in pair order: block-diagonal copies of [[0, 1], [-1, 0]]."""
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _pair_permutation(n: int) -> np.ndarray:
    # block index -> pair index: q_i -> 2i, p_i -> 2i+1
    return np.array([2 * i for i in range(n)] + [2 * i + 1 for i in range(n)])


def pairs_to_blocks(m: np.ndarray) -> np.ndarray:
    """Reorder the last two axes from (q1,p1,q2,p2,..) to (q1,q2,..,p1,p2,..)."""
    m = np.asarray(m)
    perm = _pair_permutation(m.shape[-1] // 2)
    return m[..., perm, :][..., :, perm]


def blocks_to_pairs(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    inv = np.argsort(_pair_permutation(m.shape[-1] // 2))
    return m[..., inv, :][..., :, inv]


def direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symplectic direct sum in block order: (q_a, q_b, p_a, p_b)."""
    na, nb = a.shape[0] // 2, b.shape[0] // 2
    n = na + nb
    out = np.zeros((2 * n, 2 * n))
    ia = np.r_[0:na, n : n + na]
    ib = np.r_[na:n, n + na : 2 * n]
    out[np.ix_(ia, ia)] = a
    out[np.ix_(ib, ib)] = b
    return out


def unitary_to_symplectic(u: np.ndarray) -> np.ndarray:
    """X + iY in U(n) -> [[X, -Y], [Y, X]] in Sp(2n) ∩ O(2n)."""
    x, y = u.real, u.imag
    return np.block([[x, -y], [y, x]])


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def symplectic_defect(m: np.ndarray) -> np.ndarray:
    """max |M^T J M - J| per matrix of a stack."""
    m = np.asarray(m, dtype=float)
    j = standard_j(m.shape[-1] // 2)
    d = np.swapaxes(m, -1, -2) @ j @ m - j
    return np.abs(d).max(axis=(-1, -2))


def check_symplectic(m: np.ndarray, tol: float = SYMPLECTIC_TOL, exc=NonSymplectic) -> None:
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2] or m.shape[-1] % 2:
        raise exc(f"expected square matrices of even size, got shape {m.shape}")
    defect = symplectic_defect(m)
    worst = float(np.max(defect)) if defect.size else 0.0
    if not worst <= tol:
        raise exc(f"||M^T J M - J||_max = {worst:.3e} exceeds {tol:.1e}")


@dataclass(frozen=True)
class SymplecticMatrix:
    entries: np.ndarray
    tol: float = SYMPLECTIC_TOL

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        check_symplectic(m, self.tol)
        det = np.linalg.det(m)
        if abs(det - 1.0) > DET_TOL:
            raise NonSymplectic(f"det = {det!r} is not 1")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def from_pairs(cls, m, tol: float = SYMPLECTIC_TOL) -> "SymplecticMatrix":
        return cls(pairs_to_blocks(np.asarray(m, dtype=float)), tol)

    @property
    def n(self) -> int:
        return self.entries.shape[0] // 2

    def __matmul__(self, other: "SymplecticMatrix") -> "SymplecticMatrix":
        return SymplecticMatrix(self.entries @ other.entries, max(self.tol, other.tol))

    def inverse(self) -> "SymplecticMatrix":
        j = standard_j(self.n)
        return SymplecticMatrix(-j @ self.entries.T @ j, self.tol)


def _as_stack(m) -> np.ndarray:
    if isinstance(m, SymplecticMatrix):
        return m.entries
    return np.asarray(m, dtype=float)


# ---------------------------------------------------------------------------
# rho


def _palindromic_roots(m: np.ndarray) -> np.ndarray | None:
    """Roots u of the reduced characteristic polynomial in u = lambda + 1/lambda.

    Only for 2n <= 4, where the symplectic characteristic polynomial is
    palindromic of degree <= 4.  Returns an array (..., n) of complex u.
    """
    size = m.shape[-1]
    tr = np.trace(m, axis1=-2, axis2=-1)
    if size == 2:
        return tr[..., None].astype(complex)
    if size == 4:
        tr2 = np.trace(m @ m, axis1=-2, axis2=-1)
        c2 = 0.5 * (tr * tr - tr2)
        disc = np.sqrt((tr * tr - 4.0 * (c2 - 2.0)).astype(complex))
        return np.stack([(tr + disc) / 2, (tr - disc) / 2], axis=-1)
    return None


def _rho_palindromic(m: np.ndarray, parabolic_tol: float = _PARABOLIC_TOL):
    """rho for 2n <= 4 without an eigen-decomposition.

    Each real root u = 2 cos(theta) with |u| < 2 is an elliptic pair
    e^{+-i theta} with a 2-plane E of eigenvectors; e^{i theta} is of the first
    kind exactly when omega(v, M v) > 0 for v in E.  Roots within
    parabolic_tol (relative) of +-2 count as the real eigenvalue +-1.  Returns
    (rho, ok) where rows with colliding roots are flagged not ok.
    """
    u = _palindromic_roots(m)
    count, size = m.shape[0], m.shape[-1]
    out = np.ones(count, dtype=complex)
    ok = np.ones(count, dtype=bool)
    scale = 1.0 + np.abs(u)
    real = np.abs(u.imag) <= 1e-9 * scale
    if u.shape[-1] == 2:
        # a double root moves by the square root of the entry error
        margin = max(_SCREEN_MARGIN, float(np.sqrt(parabolic_tol)))
        ok &= np.abs(u[:, 0] - u[:, 1]) > margin * scale.max(axis=-1)
    j = standard_j(size // 2)
    eye = np.eye(size)
    for r in range(u.shape[-1]):
        ur = u[:, r].real
        tol = parabolic_tol * scale[:, r]
        out[real[:, r] & (ur < -2.0 - tol)] *= -1.0
        near = real[:, r] & (np.abs(np.abs(ur) - 2.0) <= tol)
        out[near & (ur < 0)] *= -1.0
        ell = np.flatnonzero(real[:, r] & (np.abs(ur) < 2.0 - tol) & ok)
        if ell.size == 0:
            continue
        mm = m[ell]
        if size == 2:
            w = mm[:, 1, 0]
            ok_w = np.ones(ell.size, dtype=bool)
        else:
            other = u[ell, 1 - r].real[:, None, None]
            proj = mm @ mm - other * mm + eye
            norms = np.linalg.norm(proj, axis=1)
            v = np.take_along_axis(proj, np.argmax(norms, axis=1)[:, None, None], axis=2)[..., 0]
            w = np.einsum("ni,ij,njk,nk->n", v, j, mm, v)
            big = np.max(norms, axis=1)
            ok_w = np.abs(w) > 1e-12 * big**2 * (1.0 + np.abs(mm).max(axis=(1, 2)))
        theta = np.arccos(np.clip(ur[ell] / 2.0, -1.0, 1.0))
        out[ell] *= np.exp(1j * np.sign(w) * theta)
        ok[ell[~ok_w]] = False
    return out, ok


def _krein_values(v: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Im(conj(z)^T J z) for every eigenvector column z."""
    return np.imag(np.einsum("...ia,ij,...ja->...a", v.conj(), j, v))


def _classify_rows(w, v, j, unit_band: float = 0.0):
    """Vectorised classification; returns (rho, slow-path mask).

    Unit-circle eigenvalues within unit_band of the real axis count as +-1.
    """
    nonreal = w.imag != 0
    on_circle = nonreal & (np.abs(np.abs(w) - 1.0) < CIRCLE_TOL)
    snapped = on_circle & (np.abs(w.imag) <= unit_band)
    on_circle &= ~snapped
    krein = _krein_values(v, j)
    first = on_circle & (krein < 0)
    m_minus = np.sum((~nonreal | snapped) & (w.real < 0), axis=-1)
    phase = np.where(first, np.angle(w), 0.0).sum(axis=-1)
    rho = np.exp(1j * phase) * np.where((m_minus // 2) % 2, -1.0, 1.0)

    # clusters of distinct unit-circle eigenvalues, or a vanishing Krein form
    # away from +-1, need the subspace treatment
    dist = np.abs(w[..., :, None] - w[..., None, :])
    pair = on_circle[..., :, None] & on_circle[..., None, :]
    size = w.shape[-1]
    pair &= ~np.eye(size, dtype=bool)
    clustered = np.any(pair & (dist < _CLUSTER_GROUP_TOL), axis=(-1, -2))
    weak = on_circle & (np.abs(krein) < _KREIN_TOL) & (np.abs(w.imag) > 1e-6)
    odd = (m_minus % 2) == 1
    return rho, clustered | weak.any(axis=-1) | odd


@dataclass(frozen=True)
class KreinEigenvalue:
    value: complex
    multiplicity: int
    kind: str  # "first-kind" | "second-kind" | "off-circle" | "real-unit"


@dataclass(frozen=True)
class KreinSpectrum:
    eigenvalues: tuple
    m_minus: int

    def rho(self) -> complex:
        out = complex(-1.0 if (self.m_minus // 2) % 2 else 1.0)
        for e in self.eigenvalues:
            if e.kind == "first-kind":
                out *= (e.value / abs(e.value)) ** e.multiplicity
        return out

    def first_kind(self) -> list:
        return [e for e in self.eigenvalues if e.kind == "first-kind"]


def _group(values: np.ndarray, tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, x in enumerate(values):
        for g in groups:
            if abs(values[g[0]] - x) < tol:
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def _krein_spectrum_single(m: np.ndarray) -> KreinSpectrum:
    j = standard_j(m.shape[0] // 2)
    w, v = np.linalg.eig(m)
    nonreal = w.imag != 0
    on_circle = nonreal & (np.abs(np.abs(w) - 1.0) < CIRCLE_TOL)

    out = []
    m_minus = 0
    for g in _group(w, _CLUSTER_GROUP_TOL):
        lam = complex(np.mean(w[g]))
        mult = len(g)
        # a cluster at +-1 may come back from eig as a mix of real values and
        # nearly real pairs; all of it counts as the real eigenvalue
        if abs(abs(lam.real) - 1.0) < _CLUSTER_GROUP_TOL and abs(lam.imag) < _CLUSTER_GROUP_TOL:
            out.append(KreinEigenvalue(complex(np.sign(lam.real)), mult, "real-unit"))
            m_minus += mult if lam.real < 0 else 0
        elif not nonreal[g].any() and lam.real < 0:
            out.append(KreinEigenvalue(lam, mult, "off-circle"))
            m_minus += mult
        elif on_circle[g[0]]:
            z = v[:, g]
            h = (z.conj().T @ j @ z) / 2j
            h = (h + h.conj().T) / 2
            ev = np.linalg.eigvalsh(h)
            scale = max(1.0, float(np.max(np.abs(ev))))
            if np.min(np.abs(ev)) < 1e3 * _KREIN_TOL * scale:
                if abs(lam.imag) > 1e-6:
                    raise DegenerateSpectrum(
                        f"Krein form degenerate on the eigenspace of {lam:.6g}"
                    )
            n_first = int(np.sum(ev < 0))
            if n_first:
                out.append(KreinEigenvalue(lam, n_first, "first-kind"))
            if mult - n_first:
                out.append(KreinEigenvalue(lam, mult - n_first, "second-kind"))
        else:
            out.append(KreinEigenvalue(lam, mult, "off-circle"))
    if m_minus % 2:
        raise DegenerateSpectrum(f"odd number ({m_minus}) of negative real eigenvalues")
    return KreinSpectrum(tuple(out), m_minus)


def krein_classify(m) -> KreinSpectrum:
    """Full spectrum of a symplectic matrix with Krein kinds attached."""
    arr = _as_stack(m)
    if not isinstance(m, SymplecticMatrix):
        check_symplectic(arr)
    return _krein_spectrum_single(arr)


def rho_batch(
    m,
    *,
    tol: float = SYMPLECTIC_TOL,
    check: bool = True,
    parabolic_tol: float = _PARABOLIC_TOL,
) -> np.ndarray:
    """rho over a stack (..., 2n, 2n); returns unit complex numbers of shape (...).

    parabolic_tol sets how close an eigenvalue pair must be to +-1 to count as
    the real eigenvalue.  Near a parabolic matrix rho is only Hoelder-1/2
    continuous, so a matrix known to accuracy d needs a band of order d; the
    default suits exactly computed matrices.
    """
    arr = _as_stack(m)
    if check:
        check_symplectic(arr, tol)
    shape = arr.shape[:-2]
    size = arr.shape[-1]
    flat = arr.reshape(-1, size, size)
    out = np.empty(flat.shape[0], dtype=complex)

    if size <= 4:
        out, ok = _rho_palindromic(flat, parabolic_tol)
        idx = np.flatnonzero(~ok)
    else:
        idx = np.arange(flat.shape[0])
    if idx.size:
        w, v = np.linalg.eig(flat[idx])
        band = np.sqrt(parabolic_tol) if parabolic_tol > _PARABOLIC_TOL else 0.0
        r, slow = _classify_rows(w, v, standard_j(size // 2), band)
        out[idx] = r
        for i in idx[slow]:
            out[i] = _krein_spectrum_single(flat[i]).rho()
    return out.reshape(shape)


def rho(m) -> complex:
    """Circle-valued rho of a single symplectic matrix."""
    arr = _as_stack(m)
    if arr.ndim != 2:
        raise ValueError("rho expects a single matrix; use rho_batch for stacks")
    return complex(rho_batch(arr, check=not isinstance(m, SymplecticMatrix)))


# ---------------------------------------------------------------------------
# phase paths and winding


def _steps(values: np.ndarray) -> np.ndarray:
    return np.angle(values[..., 1:] / values[..., :-1])


def refine_increments(evaluate, t0, t1, v0, v1, rows, *, max_depth=MAX_REFINE_DEPTH):
    """Bisect intervals [t0, t1] until each phase step is below pi/2.

    `evaluate(t, rows)` returns unit complex values at parameters `t` for the
    given row indices.  Returns the final pieces as arrays
    (rows, left, right, v_left, v_right).
    """
    keep = []
    r, a, b, va, vb = (np.asarray(x) for x in (rows, t0, t1, v0, v1))
    for _ in range(max_depth):
        if r.size == 0:
            break
        m = 0.5 * (a + b)
        vm = evaluate(m, r)
        r = np.concatenate([r, r])
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        va, vb = np.concatenate([va, vm]), np.concatenate([vm, vb])
        bad = np.abs(np.angle(vb / va)) >= MAX_PHASE_STEP
        keep.append((r[~bad], a[~bad], b[~bad], va[~bad], vb[~bad]))
        r, a, b, va, vb = r[bad], a[bad], b[bad], va[bad], vb[bad]
    if r.size:
        raise InsufficientResolution(
            f"{r.size} phase steps >= pi/2 remain after {max_depth} bisections"
        )
    if not keep:
        empty = np.empty(0)
        return np.empty(0, dtype=int), empty, empty, empty.astype(complex), empty.astype(complex)
    return tuple(np.concatenate(parts) for parts in zip(*keep))


@dataclass(frozen=True)
class PhasePath:
    """Samples of a map [0, 1] -> U(1), sorted by parameter."""

    t: np.ndarray
    values: np.ndarray
    closed: bool = True
    phase_tol: float = 1e-8

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.shape != v.shape or t.ndim != 1 or t.size < 2:
            raise ValueError("t and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample parameters must be strictly increasing")
        if np.max(np.abs(np.abs(v) - 1.0)) > 1e-10:
            raise ValueError("phase samples must lie on the unit circle")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)
        if self.closed and abs(v[-1] - v[0]) > self.phase_tol:
            raise NotClosed(f"|p(1) - p(0)| = {abs(v[-1] - v[0]):.3e}")

    def increments(self) -> np.ndarray:
        return _steps(self.values)

    def total_phase(self) -> float:
        return float(np.sum(self.increments()))

    def reversed(self) -> "PhasePath":
        return PhasePath(1.0 - self.t[::-1], self.values[::-1], self.closed, self.phase_tol)

    def concat(self, other: "PhasePath") -> "PhasePath":
        """Traverse self on [0, 1/2] and other on [1/2, 1] (shared base point)."""
        if abs(self.values[-1] - other.values[0]) > self.phase_tol:
            raise NotClosed("paths do not join")
        t = np.concatenate([self.t / 2, 0.5 + other.t[1:] / 2])
        v = np.concatenate([self.values, other.values[1:]])
        closed = abs(v[-1] - v[0]) <= self.phase_tol
        return PhasePath(t, v, closed, self.phase_tol)


def sample_phase_path(func: Callable[[np.ndarray], np.ndarray], samples: int = DEFAULT_SAMPLES,
                      *, max_depth: int = MAX_REFINE_DEPTH, closed: bool = True,
                      phase_tol: float = 1e-8) -> PhasePath:
    """Sample `func` on [0, 1], bisecting wherever a phase step reaches pi/2."""
    t = np.linspace(0.0, 1.0, samples + 1)
    v = np.asarray(func(t), dtype=complex)
    bad = np.flatnonzero(np.abs(_steps(v)) >= MAX_PHASE_STEP)
    if bad.size:
        r, a, b, va, vb = refine_increments(
            lambda s, _r: np.asarray(func(s), dtype=complex),
            t[bad], t[bad + 1], v[bad], v[bad + 1], np.zeros(bad.size, dtype=int),
            max_depth=max_depth,
        )
        t = np.concatenate([t, a, b])
        v = np.concatenate([v, va, vb])
        t, first = np.unique(t, return_index=True)
        v = v[first]
    return PhasePath(t, v, closed, phase_tol)


def winding_number(path: PhasePath) -> int:
    """Number of turns of a closed phase path; t -> e^{2 pi i t} gives +1."""
    if not path.closed:
        raise NotClosed("winding number needs a closed path")
    inc = path.increments()
    if inc.size and np.max(np.abs(inc)) >= MAX_PHASE_STEP:
        raise InsufficientResolution("phase step >= pi/2 in sampled path")
    return int(round(float(np.sum(inc)) / (2 * np.pi)))


# ---------------------------------------------------------------------------
# Maslov index of loops


@dataclass(frozen=True)
class MaslovResult:
    index: int
    raw_winding: float
    residual: float


LoopFn = Callable[[np.ndarray], np.ndarray]


def maslov_index(loop: LoopFn, samples: int = DEFAULT_SAMPLES, *, closure_tol: float = 1e-8,
                 symplectic_tol: float = SYMPLECTIC_TOL,
                 parabolic_tol: float = _PARABOLIC_TOL) -> MaslovResult:
    """Maslov index of a loop of symplectic matrices.

    `loop(t)` maps an array of times in [0, 1] to a stack of block-ordered
    matrices of the inverse linearised flow.  The index is the winding of
    t -> rho(loop(t))^{-1}.  parabolic_tol is passed to rho_batch.
    """
    ends = np.asarray(loop(np.array([0.0, 1.0])), dtype=float)
    eye = np.eye(ends.shape[-1])
    gap = max(np.abs(ends[0] - eye).max(), np.abs(ends[1] - eye).max())
    if gap > closure_tol:
        raise NotClosed(f"loop endpoints differ from the identity by {gap:.3e}")

    def phase(t):
        return np.conj(rho_batch(loop(t), tol=symplectic_tol, parabolic_tol=parabolic_tol))

    path = sample_phase_path(phase, samples)
    raw = path.total_phase() / (2 * np.pi)
    index = int(round(raw))
    residual = abs(raw - index)
    if residual > MAX_MASLOV_RESIDUAL:
        raise InsufficientResolution(f"Maslov winding {raw:.4f} is not close to an integer")
    return MaslovResult(index, raw, residual)


def maslov_indices(loop_family: Callable[[np.ndarray, np.ndarray], np.ndarray],
                   points: Sequence, samples: int = DEFAULT_SAMPLES, **kw) -> list[MaslovResult]:
    """Maslov index of `t -> loop_family(t, x)` for each point x."""
    return [maslov_index(lambda t, x=np.asarray(p): loop_family(t, x), samples, **kw)
            for p in points]


def point_independence_check(loop_family, points: Sequence, samples: int = DEFAULT_SAMPLES,
                             **kw) -> bool:
    if len(points) < 2:
        raise ValueError("need at least two points")
    return len({r.index for r in maslov_indices(loop_family, points, samples, **kw)}) == 1

"""Rupture-set analysis: Hölder seminorms, box dimensions, scaling laws.

The parabolic box dimension uses anisotropic tiles (spatial side r, temporal
length r^2), matching coverings by parabolic cylinders: a time line has
parabolic dimension 2, a spatial line 1.
"""

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (AccuracyError, DegenerateFitError, DomainError, UsageError,
                     ValidationError)
from .exact import BlowupSpec, rescale
from .field import SpaceTimeField
from .geometry import ParabolicPoint
from .grid import GridSpec
from .quadrature import center_mesh, spacetime_blocks

_REFINE_CELLS = 4
_BLOCK = 1024


@dataclass
class HolderEstimate:
    exponent: float
    seminorm: float
    witness_pair: Tuple[ParabolicPoint, ParabolicPoint]
    pairs_sampled: int

    def __post_init__(self):
        if self.seminorm < 0:
            raise ValidationError("seminorm must be nonnegative")


@dataclass
class RuptureSet:
    """Grid nodes with u <= threshold, as a space-time point cloud."""

    threshold: float
    xs: np.ndarray          # (m, n) spatial coordinates
    ts: np.ndarray          # (m,) times
    source_grid: GridSpec

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValidationError("rupture threshold must be positive")
        self.xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        self.ts = np.atleast_1d(np.asarray(self.ts, dtype=float))

    def __len__(self):
        return int(self.ts.size)

    def points(self) -> List[ParabolicPoint]:
        return [ParabolicPoint(tuple(x), float(t)) for x, t in zip(self.xs, self.ts)]


@dataclass
class DimensionFit:
    radii: np.ndarray        # decreasing
    counts: np.ndarray
    fitted_dim: float
    fit_range: Tuple[int, int]
    residual: float

    def __post_init__(self):
        if self.fitted_dim < -1e-9:
            raise ValidationError("fitted dimension must be nonnegative")
        counts = np.asarray(self.counts, dtype=float)
        d = np.diff(counts)
        tol = 1e-9 * np.maximum(counts[:-1], 1.0)
        # box counts grow as radii shrink; scaling integrals shrink with them;
        # either way the ladder must be monotone
        if np.any(d < -tol) and np.any(d > tol):
            raise ValidationError("counts must be monotone along the radius ladder")


# -- Hoelder seminorm ---------------------------------------------------------

def _node_cloud(field: SpaceTimeField):
    g = field.grid
    axes = np.meshgrid(*[g.axis_nodes(k) for k in range(g.n)], indexing="ij")
    xs = np.stack([a.ravel() for a in axes], axis=-1)
    return xs, field.values.reshape(field.times.size, -1)


def _quotients(xs, times, vals, ia_t, ia_s, ib_t, ib_s, exponent):
    du = np.abs(vals[ia_t, ia_s] - vals[ib_t, ib_s])
    dx = np.linalg.norm(xs[ia_s] - xs[ib_s], axis=-1)
    dt = np.abs(times[ia_t] - times[ib_t])
    delta = np.maximum(dx, np.sqrt(dt))
    ok = delta > 0
    out = np.zeros_like(du)
    out[ok] = du[ok] / delta[ok] ** exponent
    return out


def holder_seminorm(field: SpaceTimeField, exponent: float, budget: int,
                    seed: int = 0) -> HolderEstimate:
    """Estimate sup |u(X) - u(Y)| / delta(X, Y)^exponent over grid nodes.

    Random node pairs seed a local hill climb: all node pairs within
    parabolic distance 4h of the current witness are tried until no
    improvement remains.  Pairs come from a counter-based Philox stream in
    fixed blocks of 1024 with one climb per block, so runs are reproducible
    and a larger budget strictly extends the evaluated set: the estimate
    never decreases when the budget grows under the same seed.  The returned
    seminorm is exactly realized by the witness pair.
    """
    if not 0 < exponent <= 1:
        raise UsageError("exponent must lie in (0, 1]")
    if budget < 1000:
        raise UsageError("budget must be at least 10^3 pairs")
    xs, vals = _node_cloud(field)
    nt, ns = vals.shape
    if nt * ns < 2:
        raise UsageError("need at least two nodes")
    times = field.times
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    g = field.grid
    h = g.spacing
    shape = g.node_shape

    evaluated = 0

    def _neighbors(it, isp):
        multi = np.unravel_index(isp, shape)
        ranges = [range(max(m - _REFINE_CELLS, 0), min(m + _REFINE_CELLS, shape[k] - 1) + 1)
                  for k, m in enumerate(multi)]
        window = (_REFINE_CELLS * h) ** 2
        tsel = np.flatnonzero(np.abs(times - times[it]) <= window)
        out = []
        for mt in tsel:
            for combo in itertools.product(*ranges):
                out.append((int(mt), int(np.ravel_multi_index(combo, shape))))
        return np.asarray(out)

    def climb(q0, pair):
        nonlocal evaluated
        cur_q, cur = q0, pair
        for _ in range(100):
            ia = _neighbors(*cur[0])
            ib = _neighbors(*cur[1])
            pa = np.repeat(np.arange(len(ia)), len(ib))
            pb = np.tile(np.arange(len(ib)), len(ia))
            q = _quotients(xs, times, vals, ia[pa, 0], ia[pa, 1],
                           ib[pb, 0], ib[pb, 1], exponent)
            evaluated += q.size
            j = int(np.argmax(q))
            if q[j] <= cur_q * (1 + 1e-15):
                break
            cur_q = float(q[j])
            cur = ((int(ia[pa[j], 0]), int(ia[pa[j], 1])),
                   (int(ib[pb[j], 0]), int(ib[pb[j], 1])))
        return cur_q, cur

    best = (0.0, ((0, 0), (0, 0)))
    climbed = {}
    n_blocks = (budget + _BLOCK - 1) // _BLOCK
    for _ in range(n_blocks):
        ia = rng.integers(0, nt * ns, size=_BLOCK)
        ib = rng.integers(0, nt * ns, size=_BLOCK)
        q = _quotients(xs, times, vals, ia // ns, ia % ns, ib // ns, ib % ns, exponent)
        evaluated += _BLOCK
        j = int(np.argmax(q))
        start = ((int(ia[j] // ns), int(ia[j] % ns)), (int(ib[j] // ns), int(ib[j] % ns)))
        if start not in climbed:
            climbed[start] = climb(float(q[j]), start)
        if climbed[start][0] > best[0]:
            best = climbed[start]

    (at, asp), (bt, bsp) = best[1]
    wa = ParabolicPoint(tuple(xs[asp]), float(times[at]))
    wb = ParabolicPoint(tuple(xs[bsp]), float(times[bt]))
    return HolderEstimate(exponent=exponent, seminorm=max(best[0], 0.0),
                          witness_pair=(wa, wb), pairs_sampled=evaluated)


# -- rupture set and dimensions -------------------------------------------------

def rupture_threshold(field: SpaceTimeField, kappa: float = 4.0) -> float:
    """Recommended threshold kappa * h^alpha.

    An alpha-Hoelder field with a true zero within parabolic distance h of a
    node has node value at most [u] h^alpha, so kappa above the seminorm
    captures every node parabolically adjacent to the zero set.
    """
    return kappa * field.h ** field.params.alpha


def rupture_set(field: SpaceTimeField, tau: float) -> RuptureSet:
    """All space-time grid nodes with u <= tau (may be empty)."""
    if tau <= 0:
        raise UsageError("tau must be positive")
    xs, vals = _node_cloud(field)
    it, isp = np.nonzero(vals <= tau)
    return RuptureSet(threshold=tau, xs=xs[isp], ts=field.times[it],
                      source_grid=field.grid)


def _fit_window(radii: np.ndarray) -> Tuple[int, int]:
    """Trim one octave at each end of the (decreasing) ladder."""
    r = np.asarray(radii, dtype=float)
    keep = np.flatnonzero((r <= r[0] / 2.0 + 1e-12 * r[0]) & (r >= 2.0 * r[-1] - 1e-12 * r[0]))
    if keep.size >= 2:
        return int(keep[0]), int(keep[-1] + 1)
    # ladder too short to trim; fall back to the middle half, then everything
    m = len(r)
    if m >= 4:
        return m // 4, m - m // 4
    return 0, m


def _loglog_fit(radii, counts, fit_range) -> Tuple[float, float]:
    i0, i1 = fit_range
    lr = np.log(np.asarray(radii[i0:i1], dtype=float))
    lc = np.log(np.asarray(counts[i0:i1], dtype=float))
    if np.unique(lr).size < 2:
        raise DegenerateFitError("fewer than two distinct radii in the fit window",
                                 radii=np.asarray(radii), counts=np.asarray(counts))
    coef, res, *_ = np.polyfit(lr, lc, 1, full=True)
    rms = float(np.sqrt(res[0] / lc.size)) if len(res) else 0.0
    return float(coef[0]), rms


def _validate_radii(radii, h: float, size: float):
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) >= 0):
        raise UsageError("radii must be a decreasing list with >= 2 entries")
    if r[-1] < 4.0 * h - 1e-12 or r[0] > size / 4.0 + 1e-12:
        raise UsageError(
            f"radii must lie within [4h, domain/4] = [{4*h:g}, {size/4:g}]")
    return r


def parabolic_box_dimension(S: RuptureSet, radii: Sequence[float]) -> DimensionFit:
    """Box-counting dimension with parabolic tiles (side r, duration r^2).

    fitted_dim is minus the log-log slope of counts against r over the
    trimmed window.  A cloud whose counts never change reads as dimension
    zero (every finite point set does, once the radii resolve its gaps).
    """
    if len(S) == 0:
        raise UsageError("rupture set is empty")
    r = _validate_radii(radii, S.source_grid.spacing, max(S.source_grid.extent))
    x_ref = S.xs.min(axis=0)
    t_ref = S.ts.min()
    counts = []
    for rad in r:
        keys = [np.floor((S.xs[:, k] - x_ref[k]) / rad).astype(np.int64)
                for k in range(S.xs.shape[1])]
        keys.append(np.floor((S.ts - t_ref) / rad ** 2).astype(np.int64))
        counts.append(int(np.unique(np.stack(keys, axis=1), axis=0).shape[0]))
    counts = np.asarray(counts)
    window = _fit_window(r)
    if np.all(counts == counts[0]):
        return DimensionFit(r, counts, 0.0, window, 0.0)
    slope, rms = _loglog_fit(r, counts, window)
    return DimensionFit(r, counts, max(-slope, 0.0), window, rms)


def slice_dimension(S: RuptureSet, t: float, radii: Sequence[float]) -> DimensionFit:
    """Euclidean box counting of the spatial slice {x : (x, t) in S}."""
    h = S.source_grid.spacing
    sel = np.abs(S.ts - t) <= h ** 2
    if not sel.any():
        raise DomainError(f"no rupture points within h^2 of t={t}")
    xs = S.xs[sel]
    r = _validate_radii(radii, h, max(S.source_grid.extent))
    x_ref = xs.min(axis=0)
    counts = []
    for rad in r:
        keys = np.floor((xs - x_ref) / rad).astype(np.int64)
        counts.append(int(np.unique(keys, axis=0).shape[0]))
    counts = np.asarray(counts)
    window = _fit_window(r)
    if np.all(counts == counts[0]):
        return DimensionFit(r, counts, 0.0, window, 0.0)
    slope, rms = _loglog_fit(r, counts, window)
    return DimensionFit(r, counts, max(-slope, 0.0), window, rms)


# -- a priori scaling laws ------------------------------------------------------

_QUANTITIES = ("u_inv_p", "energy", "mass")


def apriori_scaling_check(field: SpaceTimeField, X0: ParabolicPoint, quantity: str,
                          radii: Sequence[float],
                          u_floor: Optional[float] = None) -> DimensionFit:
    """Fit the growth exponent of a local integral over backward cylinders.

    quantity u_inv_p: int u^-p       (expected n + 2/(p+1))
             energy:  int |grad u|^2 + u^(1-p)   (expected n + 4/(p+1))
             mass:    int u          (expected n + 2 + 2/(p+1), a lower bound)

    fitted_dim carries the exponent itself (positive slope of log I vs log r).
    """
    if quantity not in _QUANTITIES:
        raise UsageError(f"quantity must be one of {_QUANTITIES}")
    r = np.asarray(radii, dtype=float)
    if np.any(np.diff(r) >= 0):
        r = np.sort(r)[::-1]
    p = field.params.p
    floor = field.h ** field.params.alpha if u_floor is None else u_floor
    c = np.asarray(X0.x)

    vals = []
    for rad in r:
        box = (tuple(c - rad), tuple(c + rad))
        acc = 0.0
        total_w = excl_w = 0.0
        for blk in spacetime_blocks(field, X0.t - rad ** 2, X0.t, box=box):
            pts = np.stack(center_mesh(blk.centers), axis=-1)
            inside = np.sum((pts - c) ** 2, axis=-1) <= rad ** 2
            w = blk.dt * blk.volume
            if quantity == "mass":
                acc += w * float((blk.u * inside).sum())
                continue
            ok = blk.u >= floor
            safe_u = np.where(ok, blk.u, 1.0)
            total_w += w * float(inside.sum())
            excl_w += w * float((inside & ~ok).sum())
            if quantity == "u_inv_p":
                integrand = np.where(ok, safe_u ** (-p), 0.0)
            else:
                grad2 = sum(gk ** 2 for gk in blk.grad)
                integrand = grad2 + np.where(ok, safe_u ** (1.0 - p), 0.0)
            acc += w * float((integrand * inside).sum())
        if quantity != "mass" and total_w > 0 and excl_w / total_w > 0.01:
            raise AccuracyError(
                f"singular cells carry {excl_w / total_w:.1%} of Q_r at r={rad:g}")
        if acc <= 0:
            raise DegenerateFitError(f"integral vanished at r={rad:g}", radii=r)
        vals.append(acc)
    vals = np.asarray(vals)
    slope, rms = _loglog_fit(r, vals, (0, len(r)))
    return DimensionFit(r, vals, max(slope, 0.0), (0, len(r)), rms)


# -- blow-up sequences ----------------------------------------------------------

@dataclass
class BlowupDiagnostics:
    sup_norms: List[float]
    sup_diffs: List[float]          # successive rescaling differences
    converged: bool


def blowup_sequence(field: SpaceTimeField, X0: ParabolicPoint,
                    lambdas: Sequence[float], target_grid: GridSpec,
                    target_times) -> Tuple[List[SpaceTimeField], BlowupDiagnostics]:
    """Rescalings lam^-alpha u(x0 + lam x, t0 + lam^2 t) on a common grid.

    Successive sup differences are the Cauchy diagnostic for tangent-function
    convergence; at a positivity point the sup norms blow up like lam^-alpha
    and the report flags non-convergence.
    """
    lams = list(lambdas)
    if any(l2 >= l1 for l1, l2 in zip(lams, lams[1:])):
        raise UsageError("lambdas must be strictly decreasing")
    fields = []
    for lam in lams:
        try:
            fields.append(rescale(field, BlowupSpec(X0, lam), target_grid, target_times))
        except DomainError as exc:
            raise DomainError(f"lambda={lam}: {exc}") from exc
    sups = [float(np.abs(f.values).max()) for f in fields]
    diffs = [float(np.abs(a.values - b.values).max())
             for a, b in zip(fields, fields[1:])]
    converged = True
    if diffs:
        if sups[-1] > 4.0 * sups[0] + 1e-12:
            converged = False
        if len(diffs) >= 2 and diffs[-1] > diffs[0] + 1e-12 and diffs[-1] > 1e-10:
            converged = False
    return fields, BlowupDiagnostics(sup_norms=sups, sup_diffs=diffs, converged=converged)

"""Gaussian-weighted monotone energy, density, and frequency functionals.

E(s) is the backward heat-kernel weighted energy at a base point; its s -> 0
limit (the density) is finite exactly at rupture points and diverges like a
negative power at positivity points.  H, D and N = D/H form the parabolic
frequency, nondecreasing in s for (two-valued) caloric fields, with
d/ds log H = 2N/s.
"""

import warnings
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaincc

from .bumps import CutoffSpec
from .errors import AccuracyWarning, DomainError, UsageError, ValidationError
from .field import SpaceTimeField
from .geometry import ParabolicPoint
from .quadrature import slab_cells


@dataclass(frozen=True)
class WeightSpec:
    """Heat-kernel truncation radius (in units of sqrt(s)) and optional cutoff.

    eta=None integrates against the bare truncated kernel (the full-space
    variant used on entire blow-up limits); otherwise eta is the fixed spatial
    plateau cutoff.  A cutoff with center=None recenters on the base point.
    Reports record which variant was used and the analytic kernel tail bound.
    """

    truncation_multiple: float = 6.0
    eta: Optional[CutoffSpec] = CutoffSpec(center=None, inner_radius=0.5, outer_radius=1.0)

    def __post_init__(self):
        if self.truncation_multiple < 4.0:
            raise ValidationError("truncation_multiple must be >= 4")

    def tail_bound(self, n: int) -> float:
        """Heat-kernel mass outside the truncation ball |y| <= k sqrt(s)."""
        return float(gammaincc(n / 2.0, self.truncation_multiple ** 2 / 4.0))


@dataclass
class SlackModel:
    """Allowed downward wiggle of E per scan interval: tol_abs + tol_exp e^(-1/(8s))."""

    tol_abs: float = 1e-4
    tol_exp: float = 1.0

    def allowance(self, s: float) -> float:
        return self.tol_abs + self.tol_exp * np.exp(-1.0 / (8.0 * s))


@dataclass
class MonotonicityTrace:
    base_point: ParabolicPoint
    s_samples: np.ndarray
    E_values: np.ndarray
    Ebar_values: np.ndarray
    theta_estimate: Optional[float]
    diverging: bool
    violations: List[Tuple[Tuple[float, float], float]]
    tail_bound: float = 0.0
    eta_used: bool = True
    singular_flag: bool = False

    def __post_init__(self):
        s = np.asarray(self.s_samples)
        if np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValidationError("s_samples must be strictly increasing and positive")
        if self.theta_estimate is not None and self.diverging:
            raise ValidationError("theta is only reported for traces bounded below")


@dataclass
class FrequencyTrace:
    base_point: ParabolicPoint
    s_samples: np.ndarray
    H_values: np.ndarray
    D_values: np.ndarray
    N_values: np.ndarray                  # NaN where H underflowed
    gamma_half_reference: Optional[float] = None
    violations: List[Tuple[Tuple[float, float], float]] = dc_field(default_factory=list)
    monotonicity_claimed: bool = True
    max_reference_gap: Optional[float] = None
    underflow_flagged: bool = False

    def __post_init__(self):
        if np.any(self.H_values < 0) or np.any(self.D_values < 0):
            raise ValidationError("H and D must be nonnegative")


@dataclass
class EnergyEval:
    value: float
    weighted_mass: float
    singular_fraction: float
    tail_bound: float
    flagged: bool


def _gaussian_weights(field: SpaceTimeField, x0: ParabolicPoint, s: float,
                      w: WeightSpec):
    """Cell centers, values, gradients and G*eta weights on the truncated ball."""
    n = field.n
    t_eval = x0.t - s
    if s <= 0:
        raise UsageError("s must be positive")
    if t_eval < field.times[0] - 1e-12 or t_eval > field.times[-1] + 1e-12:
        raise DomainError(f"slab t0 - s = {t_eval} is outside the stored history")
    radius = w.truncation_multiple * np.sqrt(s)
    c = np.asarray(x0.x)
    eta = w.eta.resolved(x0.x) if w.eta is not None else None
    lo = c - radius
    hi = c + radius
    if eta is not None:
        ec = np.asarray(eta.center)
        g = field.grid
        if (np.any(ec - eta.outer_radius < np.asarray(g.origin) - 1e-12) or
                np.any(ec + eta.outer_radius > np.asarray(g.upper()) + 1e-12)):
            raise DomainError("cutoff support must sit inside the spatial domain")
        lo = np.maximum(lo, ec - eta.outer_radius)
        hi = np.minimum(hi, ec + eta.outer_radius)
    cells = slab_cells(field, t_eval, box=(tuple(lo), tuple(hi)))
    if cells.u.size == 0:
        raise DomainError("weighted integral window misses the spatial domain")
    pts = cells.points().reshape(cells.u.shape + (n,))
    y2 = np.sum((pts - c) ** 2, axis=-1)
    G = (4.0 * np.pi * s) ** (-n / 2.0) * np.exp(-y2 / (4.0 * s))
    G = np.where(y2 <= radius ** 2, G, 0.0)
    etav = eta.value(pts) if eta is not None else 1.0
    return cells, G * etav * cells.volume, eta is not None


def weighted_energy_detail(field: SpaceTimeField, x0: ParabolicPoint, s: float,
                           w: WeightSpec, u_floor: Optional[float] = None) -> EnergyEval:
    p = field.params.p
    floor = field.h ** field.params.alpha if u_floor is None else u_floor
    cells, wgt, _ = _gaussian_weights(field, x0, s, w)
    grad2 = sum(gk ** 2 for gk in cells.grad)
    ok = cells.u >= floor
    safe_u = np.where(ok, cells.u, 1.0)
    upow = np.where(ok, safe_u ** (1.0 - p), 0.0)
    term1 = s ** ((p - 1.0) / (p + 1.0)) * float(
        (wgt * (0.5 * grad2 - upow / (p - 1.0))).sum())
    term2 = -s ** (-2.0 / (p + 1.0)) / (2.0 * (p + 1.0)) * float((wgt * cells.u ** 2).sum())
    mass = float(wgt.sum())
    excl = float((wgt * ~ok).sum())
    frac = excl / mass if mass > 0 else 0.0
    flagged = frac > 0.01
    return EnergyEval(term1 + term2, mass, frac, w.tail_bound(field.n), flagged)


def weighted_energy(field: SpaceTimeField, x0: ParabolicPoint, s: float,
                    w: WeightSpec, u_floor: Optional[float] = None) -> float:
    """The scaled heat-kernel weighted energy E(s) at base point x0.

    If singular cells carry more than 1% of the weighted mass the value is
    still returned but an AccuracyWarning is emitted.
    """
    ev = weighted_energy_detail(field, x0, s, w, u_floor)
    if ev.flagged:
        warnings.warn(
            f"singular cells carry {ev.singular_fraction:.1%} of the weighted mass "
            f"at s={s:g}", AccuracyWarning, stacklevel=2)
    return ev.value


def averaged_energy(field: SpaceTimeField, x0: ParabolicPoint, s: float,
                    w: WeightSpec, samples: int = 9,
                    u_floor: Optional[float] = None) -> float:
    """Octave average (1/s) int_s^{2s} E; continuous where E is merely integrable."""
    return _average_over_octave(
        lambda tau: weighted_energy_detail(field, x0, tau, w, u_floor).value, s, samples)


def _average_over_octave(fn, s: float, samples: int) -> float:
    if samples < 8:
        raise UsageError("octave average uses at least 8 samples")
    taus = np.linspace(s, 2.0 * s, samples)
    vals = np.array([fn(t) for t in taus])
    return float(np.trapezoid(vals, taus) / s)


def density_estimate(field: SpaceTimeField, x0: ParabolicPoint, w: WeightSpec,
                     s_min: float, s_max: float,
                     slack: Optional[SlackModel] = None,
                     fine_per_octave: int = 8,
                     u_floor: Optional[float] = None
                     ) -> Tuple[Optional[float], MonotonicityTrace]:
    """Extrapolate Ebar down a geometric ladder toward the s -> 0 density.

    Returns (theta, trace) at rupture points; (None, trace-with-diverging-flag)
    when Ebar runs off to -infinity at a negative power rate, which is the
    signature of a positivity point.  The trace carries every interval where E
    decreased by more than the slack model allows.
    """
    if not s_min < s_max:
        raise UsageError("s_min < s_max required")
    if field.times.size >= 2:
        dt_near = field.local_dt(min(max(x0.t - s_min, field.times[0]), field.times[-1]))
        if s_min < 4.0 * dt_near:
            raise UsageError(
                f"s_min={s_min:g} under-resolves the stored steps near t0 "
                f"(local dt={dt_near:g}); need s_min >= 4*dt")
    slack = slack or SlackModel()
    p = field.params.p
    alpha = field.params.alpha

    n_oct = int(np.floor(np.log2(s_max / s_min) + 1e-12))
    if n_oct < 2:
        raise UsageError("ladder needs at least three octave points (s_max >= 4 s_min)")
    ladder = np.array(sorted(s_max / 2.0 ** k for k in range(n_oct + 1)))

    singular = False
    e_vals, ebar_vals = [], []
    for s in ladder:
        det = weighted_energy_detail(field, x0, s, w, u_floor)
        singular |= det.flagged
        e_vals.append(det.value)
        ebar_vals.append(averaged_energy(field, x0, s, w, u_floor=u_floor))
    e_vals = np.array(e_vals)
    ebar_vals = np.array(ebar_vals)

    # fine scan of E for almost-monotonicity violations
    n_fine = max(int(np.ceil(fine_per_octave * np.log2(2.0 * s_max / s_min))), 2)
    fine = np.geomspace(s_min, 2.0 * s_max, n_fine + 1)
    fine_e = np.array([weighted_energy_detail(field, x0, s, w, u_floor).value for s in fine])
    violations = []
    for a, b, ea, eb in zip(fine[:-1], fine[1:], fine_e[:-1], fine_e[1:]):
        drop = ea - eb
        if drop > slack.allowance(b):
            violations.append(((float(a), float(b)), float(drop)))

    # divergence: deep ladder values far below the calm (large-s) median,
    # falling at a negative power rate of at least 1/(p+1)
    half = max(len(ladder) // 2, 1)
    calm_median = float(np.median(ebar_vals[half:]))
    diverging = False
    if abs(calm_median) > 0 and float(ebar_vals.min()) < -10.0 * abs(calm_median):
        low = slice(0, max(len(ladder) - half, 2))
        ys = ebar_vals[low]
        if np.all(ys < 0):
            coef = np.polyfit(np.log(ladder[low]), np.log(-ys), 1)
            if coef[0] <= -1.0 / (p + 1.0):
                diverging = True

    theta = None
    if not diverging:
        # linear fit of the last three ladder points in the s^alpha basis;
        # the leading correction of E for the collapse oracle is O(s^alpha)
        sk = ladder[:3]
        yk = ebar_vals[:3]
        basis = np.stack([np.ones(3), sk ** alpha], axis=1)
        coef, *_ = np.linalg.lstsq(basis, yk, rcond=None)
        theta = float(coef[0])

    trace = MonotonicityTrace(
        base_point=x0, s_samples=ladder, E_values=e_vals, Ebar_values=ebar_vals,
        theta_estimate=theta, diverging=diverging, violations=violations,
        tail_bound=w.tail_bound(field.n), eta_used=w.eta is not None,
        singular_flag=singular)
    return theta, trace


# -- frequency ----------------------------------------------------------------

def frequency(field: SpaceTimeField, x0: ParabolicPoint, s: float, w: WeightSpec,
              h_tol: float = 1e-12) -> Tuple[float, float, Optional[float]]:
    """Height H = int u^2 G, energy D = s int |grad u|^2 G, frequency N = D/H.

    Integrals run over the truncated kernel ball at the slab t0 - s; no
    cutoff is applied (these are the whole-space functionals).
    """
    bare = WeightSpec(truncation_multiple=w.truncation_multiple, eta=None)
    cells, wgt, _ = _gaussian_weights(field, x0, s, bare)
    H = float((wgt * cells.u ** 2).sum())
    grad2 = sum(gk ** 2 for gk in cells.grad)
    D = s * float((wgt * grad2).sum())
    sup = float(np.abs(field.values).max())
    N = D / H if H > h_tol * max(sup * sup, 1e-300) else None
    return H, D, N


def almgren_scan(field: SpaceTimeField, x0: ParabolicPoint, w: WeightSpec,
                 s_grid: Sequence[float], caloric: bool = True,
                 gamma_half_reference: Optional[float] = None,
                 violation_tol: float = 1e-6) -> FrequencyTrace:
    """Frequency trace over an increasing s grid with monotonicity scanning.

    Monotonicity of N is only a theorem for (two-valued) caloric fields; pass
    caloric=False to record the trace without asserting the claim (the trace
    keeps monotonicity_claimed=False).
    """
    s_grid = np.asarray(list(s_grid), dtype=float)
    if np.any(np.diff(s_grid) <= 0) or np.any(s_grid <= 0):
        raise UsageError("s_grid must be positive and increasing")
    H, D, N = [], [], []
    underflow = False
    for s in s_grid:
        hv, dv, nv = frequency(field, x0, s, w)
        H.append(hv)
        D.append(dv)
        if nv is None:
            underflow = True
            N.append(np.nan)
        else:
            N.append(nv)
    H, D, N = np.array(H), np.array(D), np.array(N)
    violations = []
    if caloric:
        for i in range(len(s_grid) - 1):
            if np.isnan(N[i]) or np.isnan(N[i + 1]):
                continue
            drop = N[i] - N[i + 1]
            if drop > violation_tol:
                violations.append(((float(s_grid[i]), float(s_grid[i + 1])), float(drop)))
    gap = None
    if gamma_half_reference is not None:
        valid = ~np.isnan(N)
        gap = float(np.max(np.abs(N[valid] - gamma_half_reference))) if valid.any() else None
    return FrequencyTrace(
        base_point=x0, s_samples=s_grid, H_values=H, D_values=D, N_values=N,
        gamma_half_reference=gamma_half_reference, violations=violations,
        monotonicity_claimed=caloric, max_reference_gap=gap,
        underflow_flagged=underflow)


def log_h_identity_error(trace: FrequencyTrace) -> float:
    """Worst relative gap in d/ds log H = 2N/s via centered differences."""
    s, H, N = trace.s_samples, trace.H_values, trace.N_values
    if len(s) < 3:
        raise UsageError("need at least three samples for centered differences")
    worst = 0.0
    for i in range(1, len(s) - 1):
        if np.isnan(N[i]) or H[i - 1] <= 0 or H[i + 1] <= 0:
            continue
        lhs = (np.log(H[i + 1]) - np.log(H[i - 1])) / (s[i + 1] - s[i - 1])
        rhs = 2.0 * N[i] / s[i]
        if rhs != 0:
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return worst

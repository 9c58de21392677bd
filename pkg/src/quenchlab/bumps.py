"""Smooth compactly supported cutoffs and test fields.

The transition profile is pinned bit-exactly so residual reports are
reproducible:

    q(s) = 1                          for s <= 0
    q(s) = A / (A + B)                for 0 < s < 1,  A = exp(-1/(1-s)), B = exp(-1/s)
    q(s) = 0                          for s >= 1

which equals sigma(1/s - 1/(1-s)) with the logistic sigma; that form is what
the code evaluates (stable in float64, flat to all orders at both ends).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ValidationError
from .grid import GridSpec


def _sigma(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def bump_profile(s):
    """q(s) as above; vectorized."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s <= 0.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    out[mid] = _sigma(1.0 / sm - 1.0 / (1.0 - sm))
    return out


def bump_profile_d1(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    q = _sigma(1.0 / sm - 1.0 / (1.0 - sm))
    gp = -1.0 / sm ** 2 - 1.0 / (1.0 - sm) ** 2
    out[mid] = q * (1.0 - q) * gp
    return out


def bump_profile_d2(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    q = _sigma(1.0 / sm - 1.0 / (1.0 - sm))
    gp = -1.0 / sm ** 2 - 1.0 / (1.0 - sm) ** 2
    gpp = 2.0 / sm ** 3 - 2.0 / (1.0 - sm) ** 3
    out[mid] = q * (1.0 - q) * ((1.0 - 2.0 * q) * gp ** 2 + gpp)
    return out


@dataclass(frozen=True)
class CutoffSpec:
    """Radial plateau cutoff: 1 on B_inner(center), 0 outside B_outer(center).

    center=None means "resolve to the evaluation base point"; the weighted
    functionals use that to carry one cutoff shape across base points.
    """

    center: Optional[Tuple[float, ...]] = None
    inner_radius: float = 0.5
    outer_radius: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.inner_radius < self.outer_radius):
            raise ValidationError(
                f"need 0 <= inner < outer, got {self.inner_radius}, {self.outer_radius}")
        if self.center is not None:
            object.__setattr__(self, "center",
                               tuple(float(v) for v in np.atleast_1d(self.center)))

    def resolved(self, base_x) -> "CutoffSpec":
        if self.center is not None:
            return self
        return CutoffSpec(tuple(base_x), self.inner_radius, self.outer_radius)

    def _s(self, xs):
        c = np.asarray(self.center)
        r = np.linalg.norm(np.asarray(xs) - c, axis=-1)
        return r, (r - self.inner_radius) / (self.outer_radius - self.inner_radius)

    def value(self, xs):
        _, s = self._s(xs)
        return bump_profile(s)

    def grad(self, xs):
        c = np.asarray(self.center)
        d = np.asarray(xs) - c
        r = np.linalg.norm(d, axis=-1)
        width = self.outer_radius - self.inner_radius
        s = (r - self.inner_radius) / width
        dq = bump_profile_d1(s) / width
        safe_r = np.where(r > 0, r, 1.0)
        return dq[..., None] * d / safe_r[..., None]

    def laplacian(self, xs, n: int):
        r, s = self._s(xs)
        width = self.outer_radius - self.inner_radius
        dq = bump_profile_d1(s) / width
        d2q = bump_profile_d2(s) / width ** 2
        safe_r = np.where(r > 0, r, 1.0)
        out = d2q + dq * (n - 1) / safe_r
        # inside the plateau (and at the exact center) everything vanishes
        return np.where(s <= 0.0, 0.0, out)


@dataclass(frozen=True)
class TimeWindow:
    """Smooth 1-d bump in t: 1 on [c-inner, c+inner], 0 outside [c-outer, c+outer]."""

    center: float
    inner: float
    outer: float

    def __post_init__(self):
        if not (0.0 <= self.inner < self.outer):
            raise ValidationError("need 0 <= inner < outer for the time window")

    def _s(self, t):
        return (np.abs(np.asarray(t, dtype=float) - self.center) - self.inner) / (self.outer - self.inner)

    def value(self, t):
        return bump_profile(self._s(t))

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        width = self.outer - self.inner
        return bump_profile_d1(self._s(t)) / width * np.sign(t - self.center)

    def support(self) -> Tuple[float, float]:
        return (self.center - self.outer, self.center + self.outer)


@dataclass(frozen=True)
class SpaceTimeBump:
    """psi(x, t) = eta(x) * w(t): the scalar test function of the weak forms."""

    space: CutoffSpec
    time: TimeWindow

    def value(self, xs, t):
        return self.space.value(xs) * self.time.value(t)

    def dt(self, xs, t):
        return self.space.value(xs) * self.time.d1(t)

    def grad(self, xs, t):
        w = self.time.value(t)
        g = self.space.grad(xs)
        return g * np.asarray(w)[..., None] if np.ndim(w) else g * w

    def laplacian(self, xs, t, n: int):
        return self.space.laplacian(xs, n) * self.time.value(t)

    def support_box(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        c = np.asarray(self.space.center)
        r = self.space.outer_radius
        return (tuple(c - r), tuple(c + r))

    def time_support(self) -> Tuple[float, float]:
        return self.time.support()

    def inside(self, grid: GridSpec, t_lo: float, t_hi: float, margin: float = 0.0) -> bool:
        lo, hi = self.support_box()
        glo = np.asarray(grid.origin) + margin
        ghi = np.asarray(grid.upper()) - margin
        ta, tb = self.time.support()
        return (np.all(np.asarray(lo) >= glo) and np.all(np.asarray(hi) <= ghi)
                and ta >= t_lo and tb <= t_hi)


COORDINATE = "coordinate_bump"
RADIAL = "radial_bump"
CUSTOM = "custom_table"


@dataclass(frozen=True)
class TestVectorField:
    """Compactly supported vector field Y with analytic divergence/Jacobian.

    coordinate_bump: Y = psi * e_axis
    radial_bump:     Y = psi * (x - center)
    custom_table:    caller supplies value/divergence/jacobian callables
    """

    kind: str
    bump: Optional[SpaceTimeBump] = None
    axis: int = 0
    table: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in (COORDINATE, RADIAL, CUSTOM):
            raise ValidationError(f"unknown vector-field kind {self.kind!r}")
        if self.kind in (COORDINATE, RADIAL) and self.bump is None:
            raise ValidationError(f"{self.kind} requires a bump")
        if self.kind == CUSTOM and not self.table:
            raise ValidationError("custom_table requires value/divergence/jacobian callables")

    def value(self, xs, t):
        xs = np.asarray(xs)
        if self.kind == CUSTOM:
            return self.table["value"](xs, t)
        psi = self.bump.value(xs, t)
        if self.kind == COORDINATE:
            out = np.zeros(xs.shape)
            out[..., self.axis] = psi
            return out
        return (xs - np.asarray(self.bump.space.center)) * psi[..., None]

    def divergence(self, xs, t):
        xs = np.asarray(xs)
        if self.kind == CUSTOM:
            return self.table["divergence"](xs, t)
        if self.kind == COORDINATE:
            return self.bump.grad(xs, t)[..., self.axis]
        n = xs.shape[-1]
        d = xs - np.asarray(self.bump.space.center)
        return n * self.bump.value(xs, t) + np.sum(d * self.bump.grad(xs, t), axis=-1)

    def jacobian(self, xs, t):
        """DY[i, j] = dY_i/dx_j at each point, shape (..., n, n)."""
        xs = np.asarray(xs)
        n = xs.shape[-1]
        if self.kind == CUSTOM:
            return self.table["jacobian"](xs, t)
        g = self.bump.grad(xs, t)
        out = np.zeros(xs.shape + (n,))
        if self.kind == COORDINATE:
            out[..., self.axis, :] = g
            return out
        psi = self.bump.value(xs, t)
        d = xs - np.asarray(self.bump.space.center)
        for i in range(n):
            out[..., i, :] = d[..., i, None] * g
            out[..., i, i] += psi
        return out

    def support_box(self):
        if self.kind == CUSTOM:
            return self.table.get("support_box")
        return self.bump.support_box()

    def time_support(self):
        if self.kind == CUSTOM:
            return self.table.get("time_support")
        return self.bump.time.support()

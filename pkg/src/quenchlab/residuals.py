"""Weak-form residuals evaluated on discrete fields.

Each operation turns a defining integral identity (distributional equation,
stationarity, localized energy inequality, the five conditions of a
stationary two-valued caloric function) into a quadrature residual with a
scale for relative assessment.  Nothing here proves a field *is* a weak
solution; the reports only falsify up to tolerance.
"""

from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bumps import CutoffSpec, SpaceTimeBump, TestVectorField, TimeWindow
from .errors import DomainError, SingularIntegrandError, UsageError
from .field import SpaceTimeField
from .quadrature import center_mesh, slab_cells, spacetime_blocks

_EXCLUDED_FRACTION_LIMIT = 0.25


@dataclass
class ResidualReport:
    value: float
    scale: float
    quadrature_cells: int
    excluded_fraction: float = 0.0
    detail: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.scale < 0:
            raise UsageError("report scale must be nonnegative")

    @property
    def relative(self) -> float:
        return abs(self.value) / self.scale if self.scale > 0 else abs(self.value)


def default_u_floor(field: SpaceTimeField) -> float:
    """Singular-cell floor h^alpha: cells below it leave the u-power integrals."""
    return field.h ** field.params.alpha


def _block_points(block):
    mesh = center_mesh(block.centers)
    return np.stack(mesh, axis=-1)


def _require_inside(field: SpaceTimeField, bump: SpaceTimeBump):
    if not bump.inside(field.grid, field.times[0], field.times[-1]):
        raise DomainError("test function support must sit inside the field domain")


def distributional_residual(field: SpaceTimeField, psi: SpaceTimeBump,
                            u_floor: Optional[float] = None,
                            potential: bool = True) -> ResidualReport:
    """Quadrature of  u (-psi_t - Lap psi) + u^-p psi  over the support of psi.

    Near zero for weak solutions of u_t - Lap u = -u^-p.  Cells where u drops
    below the floor are excluded from the u^-p term and their share of the
    support measure is reported.
    """
    _require_inside(field, psi)
    if float(field.values.min()) < 0:
        raise UsageError("distributional residual requires u >= 0")
    floor = default_u_floor(field) if u_floor is None else u_floor
    p = field.params.p
    t_lo, t_hi = psi.time_support()
    box = psi.support_box()

    value = scale = 0.0
    total_w = excl_w = 0.0
    ncells = 0
    for blk in spacetime_blocks(field, t_lo, t_hi, box=box):
        pts = _block_points(blk)
        t = blk.t_mid
        psiv = psi.value(pts, t)
        supp = psiv != 0.0
        w = blk.dt * blk.volume
        lin = blk.u * (-psi.dt(pts, t) - psi.laplacian(pts, t, field.n))
        value += w * float(lin.sum())
        scale += w * float(np.abs(lin).sum())
        if potential:
            ok = blk.u >= floor
            safe_u = np.where(ok, blk.u, 1.0)
            pw = np.where(ok, safe_u ** (-p), 0.0) * psiv
            value += w * float(pw.sum())
            scale += w * float(np.abs(pw).sum())
            total_w += w * float(supp.sum())
            excl_w += w * float((supp & ~ok).sum())
        ncells += int(blk.u.size)

    frac = excl_w / total_w if total_w > 0 else 0.0
    if potential and frac > _EXCLUDED_FRACTION_LIMIT:
        raise SingularIntegrandError(
            f"u vanishes on {frac:.0%} of the test support; u^-p quadrature is meaningless")
    return ResidualReport(value, scale, ncells, frac)


def _dy_quadratic(jac: np.ndarray, grad: List[np.ndarray]) -> np.ndarray:
    """DY(grad u, grad u) = sum_ij (dY_i/dx_j) u_i u_j at cell centers."""
    n = len(grad)
    out = np.zeros_like(grad[0])
    for i in range(n):
        for j in range(n):
            out += jac[..., i, j] * grad[i] * grad[j]
    return out


def stationary_residual(field: SpaceTimeField, Y: TestVectorField,
                        u_floor: Optional[float] = None,
                        potential: bool = True) -> ResidualReport:
    """Residual of the inner-variation identity

        int (|grad u|^2/2 - u^(1-p)/(p-1)) div Y - DY(grad u, grad u)
            - u_t (grad u . Y)  =  0.

    O(h^2) relative to scale for smooth positive solutions; a genuinely
    nonstationary field keeps a residual bounded away from zero under
    refinement.
    """
    box = Y.support_box()
    t_lo, t_hi = Y.time_support()
    if box is None or t_lo is None:
        raise UsageError("vector field must declare its support")
    lo, hi = box
    g = field.grid
    if (np.any(np.asarray(lo) < np.asarray(g.origin)) or
            np.any(np.asarray(hi) > np.asarray(g.upper())) or
            t_lo < field.times[0] or t_hi > field.times[-1]):
        raise DomainError("vector field support must sit inside the field domain")
    floor = default_u_floor(field) if u_floor is None else u_floor
    p = field.params.p

    value = scale = 0.0
    total_w = excl_w = 0.0
    ncells = 0
    for blk in spacetime_blocks(field, t_lo, t_hi, box=box):
        pts = _block_points(blk)
        t = blk.t_mid
        div = Y.divergence(pts, t)
        jac = Y.jacobian(pts, t)
        yv = Y.value(pts, t)
        grad2 = sum(gk ** 2 for gk in blk.grad)
        density = 0.5 * grad2
        if potential:
            ok = blk.u >= floor
            safe_u = np.where(ok, blk.u, 1.0)
            density = density - np.where(ok, safe_u ** (1.0 - p), 0.0) / (p - 1.0)
            total_w += float(ok.size)
            excl_w += float((~ok).sum())
        t1 = density * div
        t2 = _dy_quadratic(jac, blk.grad)
        t3 = blk.dtu * sum(blk.grad[k] * yv[..., k] for k in range(field.n))
        w = blk.dt * blk.volume
        value += w * float((t1 - t2 - t3).sum())
        scale += w * float((np.abs(t1) + np.abs(t2) + np.abs(t3)).sum())
        ncells += int(blk.u.size)

    frac = excl_w / total_w if total_w > 0 else 0.0
    if potential and frac > _EXCLUDED_FRACTION_LIMIT:
        raise SingularIntegrandError("u vanishes on too much of the vector field support")
    return ResidualReport(value, scale, ncells, frac)


def _energy_density(field: SpaceTimeField, u, grad, floor, potential, p):
    grad2 = sum(gk ** 2 for gk in grad)
    density = 0.5 * grad2
    excluded = np.zeros(u.shape, dtype=bool)
    if potential:
        ok = u >= floor
        safe_u = np.where(ok, u, 1.0)
        density = density - np.where(ok, safe_u ** (1.0 - p), 0.0) / (p - 1.0)
        excluded = ~ok
    return density, excluded


def energy_inequality_defect(field: SpaceTimeField, eta: SpaceTimeBump,
                             t1: float, t2: float,
                             u_floor: Optional[float] = None,
                             potential: bool = True) -> ResidualReport:
    """LHS - RHS of the time-integrated localized energy inequality on [t1, t2]:

        int (|grad u|^2/2 - u^(1-p)/(p-1)) eta^2 |_{t1}^{t2}
          <= int_{t1}^{t2} [ -|u_t|^2 eta^2 - 2 u_t (grad u . grad eta) eta
                             + 2 (|grad u|^2/2 - u^(1-p)/(p-1)) eta eta_t ].

    Positive defect beyond tolerance falsifies the inequality; smooth positive
    solutions turn it into an identity and the defect is pure quadrature error.
    """
    if not (field.times[0] - 1e-12 <= t1 < t2 <= field.times[-1] + 1e-12):
        raise DomainError("need t1 < t2 within the stored time range")
    floor = default_u_floor(field) if u_floor is None else u_floor
    p = field.params.p
    box = eta.support_box()

    def side(t):
        cells = slab_cells(field, t, box=box)
        pts = cells.points().reshape(cells.u.shape + (field.n,))
        ev = eta.value(pts, t)
        density, _ = _energy_density(field, cells.u, cells.grad, floor, potential, p)
        return cells.volume * float((density * ev ** 2).sum())

    lhs = side(t2) - side(t1)
    rhs = 0.0
    absacc = abs(side(t1)) + abs(side(t2))
    ncells = 0
    for blk in spacetime_blocks(field, t1, t2, box=box):
        pts = _block_points(blk)
        t = blk.t_mid
        ev = eta.value(pts, t)
        et = eta.dt(pts, t)
        eg = eta.grad(pts, t)
        density, _ = _energy_density(field, blk.u, blk.grad, floor, potential, p)
        gdot = sum(blk.grad[k] * eg[..., k] for k in range(field.n))
        a = -(blk.dtu ** 2) * ev ** 2
        b = -2.0 * blk.dtu * gdot * ev
        c = 2.0 * density * ev * et
        w = blk.dt * blk.volume
        rhs += w * float((a + b + c).sum())
        absacc += w * float((np.abs(a) + np.abs(b) + np.abs(c)).sum())
        ncells += int(blk.u.size)
    return ResidualReport(lhs - rhs, absacc, ncells)


# -- stationary two-valued caloric checker ------------------------------------

def default_bump_dictionary(field: SpaceTimeField, centers_per_axis: int = 3,
                            n_radii: int = 3) -> List[SpaceTimeBump]:
    """Nonnegative test bumps on a coarse lattice with a few radii.

    A complete test of a distributional inequality is impossible; this
    declared finite dictionary is what condition (ii) is checked against.
    """
    g = field.grid
    t0, t1 = float(field.times[0]), float(field.times[-1])
    span = t1 - t0
    tw = TimeWindow(center=0.5 * (t0 + t1), inner=0.2 * span, outer=0.4 * span)
    bumps = []
    ext = min(g.extent)
    radii = [ext / 8.0, ext / 6.0, ext / 4.0][:n_radii]
    fracs = np.linspace(0.25, 0.75, centers_per_axis)
    axes = [g.origin[k] + fracs * g.extent[k] for k in range(g.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    lo = np.asarray(g.origin)
    hi = np.asarray(g.upper())
    for c in centers:
        for r in radii:
            if np.all(c - r >= lo) and np.all(c + r <= hi):
                bumps.append(SpaceTimeBump(
                    space=CutoffSpec(tuple(c), 0.5 * r, r), time=tw))
    if not bumps:
        raise UsageError("domain too small for the default bump dictionary")
    return bumps


def two_valued_caloric_check(field: SpaceTimeField,
                             etas: Sequence[SpaceTimeBump],
                             Ys: Sequence[TestVectorField],
                             nonneg_bumps: Optional[Sequence[SpaceTimeBump]] = None,
                             u_floor: Optional[float] = None) -> Dict[str, ResidualReport]:
    """Check the five defining conditions of a stationary two-valued caloric field.

    (i)   finiteness of int |grad u|^2 + |u_t|^2,
    (ii)  subcaloricity  int u (psi_t + Lap psi) >= 0  against nonneg bumps,
    (iii) the contact identity  int u_t u eta^2 + |grad u|^2 eta^2
          + 2 eta u (grad u . grad eta) = 0,
    (iv)  the stationarity identity  int |grad u|^2 div Y
          - 2 DY(grad u, grad u) - 2 u_t (grad u . Y) = 0,
    (v)   the energy inequality  d/dt int |grad u|^2 eta^2
          <= -2 int |u_t|^2 eta^2 + 2 int |grad u|^2 eta eta_t
          - 4 int u_t eta (grad u . grad eta).

    Returns one report per condition; (iii)-(v) report the worst case over the
    supplied test functions.  No p-power terms appear in any of these, so the
    reports scale exactly (by c for (ii), by c^2 for the quadratic ones) when
    the field is scaled by c.
    """
    if float(field.values.min()) < 0:
        raise UsageError("two-valued caloric checks require u >= 0 on the grid")
    reports: Dict[str, ResidualReport] = {}

    # (i) finiteness over the full stored domain
    tot = 0.0
    meas = 0.0
    ncells = 0
    for blk in spacetime_blocks(field):
        grad2 = sum(gk ** 2 for gk in blk.grad)
        w = blk.dt * blk.volume
        tot += w * float((grad2 + blk.dtu ** 2).sum())
        meas += w * blk.u.size
        ncells += int(blk.u.size)
    reports["i"] = ResidualReport(tot, max(meas, 1e-300), ncells,
                                  detail={"finite": bool(np.isfinite(tot))})

    # (ii) distributional subcaloricity against a declared dictionary
    bumps = list(nonneg_bumps) if nonneg_bumps is not None else default_bump_dictionary(field)
    worst_val, worst_scale, worst_cells = np.inf, 1.0, 0
    for psi in bumps:
        _require_inside(field, psi)
        t_lo, t_hi = psi.time_support()
        val = sc = 0.0
        nc = 0
        for blk in spacetime_blocks(field, t_lo, t_hi, box=psi.support_box()):
            pts = _block_points(blk)
            term = blk.u * (psi.dt(pts, blk.t_mid) + psi.laplacian(pts, blk.t_mid, field.n))
            w = blk.dt * blk.volume
            val += w * float(term.sum())
            sc += w * float(np.abs(term).sum())
            nc += int(blk.u.size)
        if val < worst_val:
            worst_val, worst_scale, worst_cells = val, sc, nc
    reports["ii"] = ResidualReport(worst_val, worst_scale, worst_cells,
                                   detail={"dictionary_size": len(bumps),
                                           "one_sided": True})

    # (iii) contact identity, worst over etas
    best = None
    for eta in etas:
        _require_inside(field, eta)
        t_lo, t_hi = eta.time_support()
        val = sc = 0.0
        nc = 0
        for blk in spacetime_blocks(field, t_lo, t_hi, box=eta.support_box()):
            pts = _block_points(blk)
            t = blk.t_mid
            ev = eta.value(pts, t)
            eg = eta.grad(pts, t)
            grad2 = sum(gk ** 2 for gk in blk.grad)
            gdot = sum(blk.grad[k] * eg[..., k] for k in range(field.n))
            a = blk.dtu * blk.u * ev ** 2
            b = grad2 * ev ** 2
            c = 2.0 * ev * blk.u * gdot
            w = blk.dt * blk.volume
            val += w * float((a + b + c).sum())
            sc += w * float((np.abs(a) + np.abs(b) + np.abs(c)).sum())
            nc += int(blk.u.size)
        rep = ResidualReport(val, sc, nc)
        if best is None or rep.relative > best.relative:
            best = rep
    reports["iii"] = best

    # (iv) stationarity identity, worst over Ys
    best = None
    for Y in Ys:
        t_lo, t_hi = Y.time_support()
        val = sc = 0.0
        nc = 0
        for blk in spacetime_blocks(field, t_lo, t_hi, box=Y.support_box()):
            pts = _block_points(blk)
            t = blk.t_mid
            grad2 = sum(gk ** 2 for gk in blk.grad)
            div = Y.divergence(pts, t)
            jac = Y.jacobian(pts, t)
            yv = Y.value(pts, t)
            a = grad2 * div
            b = 2.0 * _dy_quadratic(jac, blk.grad)
            c = 2.0 * blk.dtu * sum(blk.grad[k] * yv[..., k] for k in range(field.n))
            w = blk.dt * blk.volume
            val += w * float((a - b - c).sum())
            sc += w * float((np.abs(a) + np.abs(b) + np.abs(c)).sum())
            nc += int(blk.u.size)
        rep = ResidualReport(val, sc, nc)
        if best is None or rep.relative > best.relative:
            best = rep
    reports["iv"] = best

    # (v) localized energy inequality (gradient-only form), worst over etas
    best = None
    for eta in etas:
        t_lo, t_hi = eta.time_support()
        a_t = max(t_lo, float(field.times[0]))
        b_t = min(t_hi, float(field.times[-1]))
        box = eta.support_box()

        def dirichlet(t):
            cells = slab_cells(field, t, box=box)
            pts = cells.points().reshape(cells.u.shape + (field.n,))
            ev = eta.value(pts, t)
            grad2 = sum(gk ** 2 for gk in cells.grad)
            return cells.volume * float((grad2 * ev ** 2).sum())

        lhs = dirichlet(b_t) - dirichlet(a_t)
        rhs = 0.0
        sc = abs(dirichlet(a_t)) + abs(dirichlet(b_t))
        nc = 0
        for blk in spacetime_blocks(field, a_t, b_t, box=box):
            pts = _block_points(blk)
            t = blk.t_mid
            ev = eta.value(pts, t)
            et = eta.dt(pts, t)
            eg = eta.grad(pts, t)
            grad2 = sum(gk ** 2 for gk in blk.grad)
            gdot = sum(blk.grad[k] * eg[..., k] for k in range(field.n))
            p1 = -2.0 * blk.dtu ** 2 * ev ** 2
            p2 = 2.0 * grad2 * ev * et
            p3 = -4.0 * blk.dtu * ev * gdot
            w = blk.dt * blk.volume
            rhs += w * float((p1 + p2 + p3).sum())
            sc += w * float((np.abs(p1) + np.abs(p2) + np.abs(p3)).sum())
            nc += int(blk.u.size)
        rep = ResidualReport(lhs - rhs, sc, nc)
        if best is None or rep.relative > best.relative:
            best = rep
    reports["v"] = best
    return reports

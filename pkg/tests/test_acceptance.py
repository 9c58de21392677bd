"""Acceptance suite: one criterion per test, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they
complete.  Tolerances are pinned here, not calibrated elsewhere.
"""

import json
import time

import numpy as np
import pytest

import quenchlab as ql
from quenchlab.errors import BudgetError


def report_line(num, label, ok, detail):
    print(f"ACCEPTANCE {num} [{label}]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} {label}: {detail}"


def ode_boundary(mp, t_quench=1.0):
    return ql.BoundaryData(
        kind="analytic_trace",
        value_fn=lambda xs, t: np.full(xs.shape[0], ql.ode_solution(mp, t - t_quench)))


@pytest.fixture(scope="module")
def quench_runs():
    """1D interior single-point quench at three resolutions."""
    mp = ql.ModelParams(p=3.0, n=1)
    runs = {}
    for cells in (256, 512, 1024):
        grid = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[cells],
                           time_start=0.0, time_end=0.02)
        init = ql.field_from_function(
            mp, grid, [0.0],
            lambda xs, t: 1.0 - 0.75 * np.exp(-xs[:, 0] ** 2 / 0.35 ** 2))
        bd = ql.BoundaryData(kind="constant", value=1.0)
        cfg = ql.SolverConfig(dt_initial=5e-5, safety=0.2)
        runs[cells] = ql.solve_until_quench(init, bd, cfg)
    return runs


def test_criterion_1_ode_quench_reproduction():
    start = time.time()
    mp = ql.ModelParams(p=3.0, n=1)
    grid = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[200],
                       time_start=0.0, time_end=1.05)
    init = ql.field_from_function(
        mp, grid, [0.0], lambda xs, t: np.full(xs.shape[0], ql.ode_solution(mp, -1.0)))
    field, rep = ql.solve_until_quench(init, ode_boundary(mp),
                                       ql.SolverConfig(dt_initial=2e-3, safety=0.2))
    t_err = abs(rep.quench_time - 1.0)
    sup = max(np.abs(field.values[j] - ql.ode_solution(mp, t - 1.0)).max()
              for j, t in enumerate(field.times) if t <= 0.95)
    elapsed = time.time() - start
    ok = t_err <= 0.01 and sup <= 1e-3 and elapsed <= 10.0
    report_line(1, "ode quench", ok,
                f"quench_time_err={t_err:.2e} (tol 1e-2), sup_err={sup:.2e} "
                f"(tol 1e-3), runtime={elapsed:.1f}s (tol 10s)")


def test_criterion_2_steady_state_residual():
    start = time.time()
    mp = ql.ModelParams(p=3.0, n=2)
    errs, dudts = [], []
    for cells in (32, 64, 128):
        grid = ql.GridSpec(origin=[0.25, 0.25], extent=[1.0, 1.0], cells=[cells] * 2,
                           time_start=0.0, time_end=1.5)
        init = ql.field_from_function(mp, grid, [0.0],
                                      lambda xs, t: np.atleast_1d(ql.radial_steady(mp, xs)))
        bd = ql.BoundaryData(kind="analytic_trace",
                             value_fn=lambda xs, t: np.atleast_1d(ql.radial_steady(mp, xs)))
        field, _ = ql.solve_until_quench(init, bd,
                                         ql.SolverConfig(dt_initial=0.05, safety=0.5))
        dudts.append(np.abs(field.values[-1] - field.values[-2]).max()
                     / (field.times[-1] - field.times[-2]))
        mesh = np.meshgrid(grid.axis_nodes(0), grid.axis_nodes(1), indexing="ij")
        exact = ql.radial_steady(mp, np.stack([m.ravel() for m in mesh], axis=-1))
        errs.append(np.abs(field.values[-1] - exact.reshape(grid.node_shape)).max())
    order1 = np.log2(errs[0] / errs[1])
    order2 = np.log2(errs[1] / errs[2])
    elapsed = time.time() - start
    ok = max(dudts) <= 1e-6 and min(order1, order2) >= 1.8 and elapsed <= 30.0
    report_line(2, "steady state", ok,
                f"max|du/dt|={max(dudts):.1e} (tol 1e-6), orders={order1:.2f},{order2:.2f} "
                f"(tol >=1.8), runtime={elapsed:.1f}s (tol 30s)")


def test_criterion_3_holder_seminorm_oracle(quench_runs):
    mp = ql.ModelParams(p=3.0, n=1)
    grid = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[100],
                       time_start=-1.0, time_end=-1e-10)
    f_ode = ql.ode_field(mp, grid, ql.geometric_times(-1.0, -1e-10, 0.9))
    s_ode = ql.holder_seminorm(f_ode, 0.5, budget=4000, seed=7).seminorm
    grid2 = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[256],
                        time_start=0.0, time_end=1.0)
    f_pow = ql.profile_field(mp, grid2, [0.0, 0.5, 1.0], "abs_x1_pow", exponent=0.5)
    s_pow = ql.holder_seminorm(f_pow, 0.5, budget=4000, seed=7).seminorm
    run_s = [ql.holder_seminorm(quench_runs[c][0], 0.5, budget=4000, seed=1).seminorm
             for c in (256, 512, 1024)]
    spread = (max(run_s) - min(run_s)) / min(run_s)
    ok = (abs(s_ode - np.sqrt(2.0)) <= 1e-2 and abs(s_pow - 1.0) <= 1e-2
          and spread < 0.20)
    report_line(3, "holder seminorm", ok,
                f"ode={s_ode:.4f} (sqrt2 +- 1e-2), power={s_pow:.4f} (1 +- 1e-2), "
                f"run spread={spread:.1%} (tol 20%)")


def test_criterion_4_density_oracle():
    start = time.time()
    mp = ql.ModelParams(p=3.0, n=1)
    grid = ql.GridSpec(origin=[-4.0], extent=[8.0], cells=[400],
                       time_start=-0.7, time_end=-1e-7)
    times = np.unique(np.concatenate([
        ql.geometric_times(-0.5, -1e-7, 0.95),
        np.linspace(-0.7, -0.26, 881),
        np.arange(-0.26, -0.2, 2e-5)]))
    f = ql.ode_field(mp, grid, times)
    w = ql.WeightSpec(truncation_multiple=6.0)
    theta, trace = ql.density_estimate(f, ql.ParabolicPoint((0.0,), 0.0), w, 1e-3, 0.2)
    theta2, trace2 = ql.density_estimate(f, ql.ParabolicPoint((0.0,), -0.25), w,
                                         1e-4, 0.2, u_floor=1e-6)
    elapsed = time.time() - start
    ok = (theta is not None and abs(theta - (-0.5)) <= 0.05
          and trace.violations == [] and not trace.diverging
          and theta2 is None and trace2.diverging and elapsed <= 20.0)
    report_line(4, "density", ok,
                f"theta={theta:.4f} (-0.5 +- 0.05), violations={len(trace.violations)}, "
                f"diverging_at_positive_point={trace2.diverging}, "
                f"runtime={elapsed:.1f}s (tol 20s)")


def test_criterion_5_almgren_oracle():
    w = ql.WeightSpec(truncation_multiple=8.0, eta=None)
    mp1 = ql.ModelParams(p=3.0, n=1)
    g1 = ql.GridSpec(origin=[-8.5], extent=[17.0], cells=[2176],
                     time_start=-1.0, time_end=1.0)
    f1 = ql.profile_field(mp1, g1, [-1.0, 0.0, 1.0], "abs_x1")
    tr1 = ql.almgren_scan(f1, ql.ParabolicPoint((0.0,), 0.5), w,
                          np.geomspace(0.1, 1.0, 16), gamma_half_reference=0.5)
    gap1 = tr1.max_reference_gap
    logh1 = ql.log_h_identity_error(tr1)

    mp2 = ql.ModelParams(p=3.0, n=2)
    g2 = ql.GridSpec(origin=[-6.0, -6.0], extent=[12.0, 12.0], cells=[384, 384],
                     time_start=-1.0, time_end=1.0)
    f2 = ql.profile_field(mp2, g2, [-1.0, 0.0, 1.0], "abs_x1x2")
    tr2 = ql.almgren_scan(f2, ql.ParabolicPoint((0.0, 0.0), 0.5), w,
                          np.geomspace(0.05, 0.5, 16), gamma_half_reference=1.0)
    gap2 = tr2.max_reference_gap
    logh2 = ql.log_h_identity_error(tr2)
    ok = (gap1 <= 1e-3 and gap2 <= 5e-3
          and tr1.violations == [] and tr2.violations == []
          and logh1 <= 0.05 and logh2 <= 0.05)
    report_line(5, "almgren frequency", ok,
                f"|N-1/2|={gap1:.1e} (tol 1e-3), |N-1|={gap2:.1e} (tol 5e-3), "
                f"violations={len(tr1.violations)}+{len(tr2.violations)} (tol 1e-6 drops), "
                f"logH err={max(logh1, logh2):.1%} (tol 5%)")


def test_criterion_6_apriori_power_laws():
    radii = [0.4, 0.283, 0.2, 0.141, 0.1, 0.0707, 0.05]
    mp2 = ql.ModelParams(p=3.0, n=2)
    g2 = ql.GridSpec(origin=[-1.0, -1.0], extent=[2.0, 2.0], cells=[256, 256],
                     time_start=-0.25, time_end=-1e-5)
    f2 = ql.radial_field(mp2, g2, ql.geometric_times(-0.25, -1e-5, 0.9))
    x2 = ql.ParabolicPoint((0.0, 0.0), -1e-5)
    mp1 = ql.ModelParams(p=3.0, n=1)
    g1 = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[512],
                     time_start=-0.25, time_end=-1e-9)
    f1 = ql.ode_field(mp1, g1, ql.geometric_times(-0.25, -1e-9, 0.9))
    x1 = ql.ParabolicPoint((0.0,), 0.0)
    gaps = {}
    for tag, f, x0, expected in (
            ("radial", f2, x2, {"u_inv_p": 2.5, "energy": 3.0, "mass": 4.5}),
            ("ode", f1, x1, {"u_inv_p": 1.5, "energy": 2.0, "mass": 3.5})):
        for q, want in expected.items():
            fit = ql.apriori_scaling_check(f, x0, q, radii, u_floor=1e-4)
            gaps[f"{tag}.{q}"] = abs(fit.fitted_dim - want)
    worst = max(gaps.values())
    report_line(6, "a priori power laws", worst <= 0.1,
                f"worst exponent gap={worst:.3f} (tol 0.1) over {sorted(gaps)}")


def test_criterion_7_parabolic_dimension(quench_runs):
    from quenchlab.rupture import RuptureSet
    g = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[1024],
                    time_start=-1.0, time_end=0.0)
    ladder = [0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125]
    d_pt = ql.parabolic_box_dimension(
        RuptureSet(0.1, np.array([[0.0]]), np.array([-0.5]), g), ladder).fitted_dim
    xs = np.linspace(0.0, 1.0, 2049)[:, None]
    d_sp = ql.parabolic_box_dimension(
        RuptureSet(0.1, xs, np.full(xs.shape[0], -0.5), g), ladder).fitted_dim
    ts = np.linspace(-1.0, 0.0, 40001)
    d_tm = ql.parabolic_box_dimension(
        RuptureSet(0.1, np.zeros((ts.size, 1)), ts, g), ladder).fitted_dim

    # interior quench run: dimension of the extracted rupture set, fit over
    # radii above the tau-thickening scale of the point cloud
    field, rep = quench_runs[512]
    tau = ql.rupture_threshold(field, kappa=2.0)
    S = ql.rupture_set(field, tau)
    semin = ql.holder_seminorm(field, 0.5, budget=2000, seed=1).seminorm
    r_lo = max(4.0 * field.h, 4.0 * (tau / semin) ** 2)
    radii = []
    r = 0.5
    while r >= r_lo:
        radii.append(r)
        r /= 2.0
    d_run = ql.parabolic_box_dimension(S, radii).fitted_dim
    d_slice = ql.slice_dimension(S, float(field.times[-1]), radii).fitted_dim
    ok = (abs(d_pt) <= 0.1 and abs(d_sp - 1.0) <= 0.1 and abs(d_tm - 2.0) <= 0.15
          and d_run <= 1.2 and d_slice <= 0.2)
    report_line(7, "parabolic dimension", ok,
                f"point={d_pt:.2f} (0 +- 0.1), spatial={d_sp:.2f} (1 +- 0.1), "
                f"temporal={d_tm:.2f} (2 +- 0.15), quench dim_P={d_run:.2f} (<=1.2), "
                f"slice={d_slice:.2f} (<=0.2)")


def test_criterion_8_weak_residual_discrimination():
    h = 1.0 / 128.0
    rel_tol = 1e-3

    def checked(profile, n):
        mp = ql.ModelParams(p=3.0, n=n)
        grid = ql.GridSpec(origin=[-1.0] * n, extent=[2.0] * n,
                           cells=[int(round(2.0 / h))] * n,
                           time_start=-1.0, time_end=1.0)
        f = ql.profile_field(mp, grid, np.linspace(-1.0, 1.0, 9), profile)
        bump = ql.SpaceTimeBump(space=ql.CutoffSpec(tuple([0.0] * n), 0.25, 0.5),
                                time=ql.TimeWindow(center=0.0, inner=0.3, outer=0.6))
        ys = [ql.TestVectorField(kind="coordinate_bump", bump=bump, axis=k)
              for k in range(n)]
        ys.append(ql.TestVectorField(kind="radial_bump", bump=bump))
        return ql.two_valued_caloric_check(f, [bump], ys)

    def all_pass(reps):
        return (np.isfinite(reps["i"].value)
                and reps["ii"].value >= -rel_tol * reps["ii"].scale
                and reps["iii"].relative <= rel_tol
                and reps["iv"].relative <= rel_tol
                and reps["v"].value <= rel_tol * reps["v"].scale)

    ok_abs = all_pass(checked("abs_x1", 1))
    ok_cross = all_pass(checked("abs_x1x2", 2))
    rel_iv = checked("relu_x1", 1)["iv"].relative

    # stability of the failure under refinement
    mp = ql.ModelParams(p=3.0, n=1)
    grid = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[512],
                       time_start=-1.0, time_end=1.0)
    f = ql.profile_field(mp, grid, np.linspace(-1.0, 1.0, 9), "relu_x1")
    bump = ql.SpaceTimeBump(space=ql.CutoffSpec((0.0,), 0.25, 0.5),
                            time=ql.TimeWindow(center=0.0, inner=0.3, outer=0.6))
    ys = [ql.TestVectorField(kind="coordinate_bump", bump=bump, axis=0),
          ql.TestVectorField(kind="radial_bump", bump=bump)]
    rel_iv_fine = ql.two_valued_caloric_check(f, [bump], ys)["iv"].relative
    ok = (ok_abs and ok_cross and rel_iv >= 0.1 and rel_iv_fine >= 0.1
          and abs(rel_iv - rel_iv_fine) <= 0.2 * rel_iv)
    report_line(8, "weak residuals", ok,
                f"|x1| pass={ok_abs}, |x1 x2| pass={ok_cross} (rel tol 1e-3), "
                f"half-plane cond iv rel={rel_iv:.3f},{rel_iv_fine:.3f} (>=0.1, stable)")


def test_criterion_9_determinism_persistence(tmp_path):
    out = tmp_path / "det"
    cfg_text = f"""
[run]
mode = synthetic
seed = 123
output_dir = "{out}"

[model]
p = 3.0
n = 1

[grid]
origin = [-8.5]
extent = [17.0]
cells = [1088]
time_start = -1.0
time_end = 1.0

[times]
kind = uniform
start = -1.0
stop = 1.0
num = 3

[synthetic]
kind = abs_x1

[analysis.freq]
op = almgren_scan
point = [0.0, 0.5]
s_min = 0.1
s_max = 1.0
num = 8
truncation = 8.0
gamma_half = 0.5

[analysis.hold]
op = holder_seminorm
exponent = 0.5
budget = 2000
"""
    cfg = ql.parse_config_text(cfg_text)
    ql.run_pipeline(cfg)
    b1 = (out / "report.json").read_bytes()
    ql.run_pipeline(cfg)
    b2 = (out / "report.json").read_bytes()
    reports_identical = b1 == b2

    field = ql.load_field(out / "field.qlf")
    ql.save_field(field, out / "copy.qlf")
    roundtrip = ((out / "copy.qlf").read_bytes() == (out / "field.qlf").read_bytes())

    # checkpoint/restart equivalence
    mp = ql.ModelParams(p=3.0, n=1)
    grid = ql.GridSpec(origin=[-1.0], extent=[2.0], cells=[64],
                       time_start=0.0, time_end=1.05)
    init = ql.field_from_function(
        mp, grid, [0.0], lambda xs, t: np.full(xs.shape[0], ql.ode_solution(mp, -1.0)))
    bd = ode_boundary(mp)

    def march(initial, steps):
        try:
            f, _ = ql.solve_until_quench(
                initial, bd, ql.SolverConfig(dt_initial=4e-3, safety=0.2, max_steps=steps))
            return f
        except BudgetError as exc:
            return exc.partial

    full = march(init, 60)
    part = march(init, 30)
    ql.save_field(part, out / "ckpt.qlf")
    loaded = ql.load_field(out / "ckpt.qlf")
    rg = ql.GridSpec(origin=grid.origin, extent=grid.extent, cells=grid.cells,
                     time_start=float(loaded.times[-1]), time_end=grid.time_end)
    resumed = march(ql.SpaceTimeField(mp, rg, [loaded.times[-1]],
                                      loaded.values[-1:].copy()), 30)
    restart_ok = (resumed.times[-1] == full.times[-1]
                  and np.array_equal(resumed.values[-1], full.values[-1]))
    ok = reports_identical and roundtrip and restart_ok
    report_line(9, "determinism & persistence", ok,
                f"reports byte-identical={reports_identical}, qlf roundtrip "
                f"bitwise={roundtrip}, checkpoint/restart bitwise={restart_ok}")

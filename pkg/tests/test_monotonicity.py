import numpy as np
import pytest

import quenchlab as ql
from quenchlab.errors import DomainError, UsageError
from quenchlab.monotonicity import _average_over_octave

BARE = ql.WeightSpec(truncation_multiple=8.0, eta=None)
QUENCH = ql.ParabolicPoint((0.0,), 0.0)

# s -> 0 limit of the weighted energy at the collapse solution's quench point:
# -(p+1)^(2/(p+1)) / (2 (p-1)) = -1/2 for p = 3
THETA_COLLAPSE_P3 = -0.5


def abs_x1_field(trunc_space=8.5, cells=2176):
    mp = ql.ModelParams(p=3.0, n=1)
    grid = ql.GridSpec(origin=[-trunc_space], extent=[2 * trunc_space], cells=[cells],
                       time_start=-1.0, time_end=1.0)
    return ql.profile_field(mp, grid, [-1.0, 0.0, 1.0], "abs_x1")


def test_weighted_energy_collapse_limit(ode_field_dense):
    w = ql.WeightSpec(truncation_multiple=6.0)
    vals = [ql.weighted_energy(ode_field_dense, QUENCH, s, w) for s in (0.05, 0.01, 1e-3)]
    # E(s) -> -1/2 as s -> 0 (grad term vanishes, u(-s)^2 cancels the s power)
    assert vals[-1] == pytest.approx(THETA_COLLAPSE_P3, abs=1e-3)
    assert vals[0] > vals[-1] - 1e-12   # increases toward larger s


def test_weighted_energy_constant_field_closed_form(p3_1d):
    # E(s) = -sqrt(s) c^-2 / 2 - c^2 / (8 sqrt(s)) for u = c, p = 3
    grid = ql.GridSpec(origin=[-4.0], extent=[8.0], cells=[1024],
                       time_start=-1.0, time_end=0.0)
    f = ql.profile_field(p3_1d, grid, [-1.0, -0.5, 0.0], "constant", exponent=1.3)
    c = 1.3
    for s in (0.02, 0.005):
        got = ql.weighted_energy(f, QUENCH, s, ql.WeightSpec(truncation_multiple=8.0))
        want = -np.sqrt(s) * c ** -2 / 2.0 - c ** 2 / (8.0 * np.sqrt(s))
        assert got == pytest.approx(want, rel=1e-3)


def test_weighted_energy_beyond_history(ode_field_dense):
    with pytest.raises(DomainError):
        ql.weighted_energy(ode_field_dense, QUENCH, 5.0, ql.WeightSpec())


def test_octave_average_identity_and_linear():
    assert _average_over_octave(lambda t: 1.0, 0.3, 9) == pytest.approx(1.0)
    # Ebar(s) = (1/s) int_s^2s tau dtau = 3s/2
    assert _average_over_octave(lambda t: t, 0.2, 9) == pytest.approx(0.3, rel=1e-12)


def test_averaged_energy_tracks_limit(ode_field_dense):
    w = ql.WeightSpec(truncation_multiple=6.0)
    got = ql.averaged_energy(ode_field_dense, QUENCH, 1e-3, w)
    assert got == pytest.approx(THETA_COLLAPSE_P3, abs=2e-3)


def test_density_estimate_at_quench_point(ode_field_dense):
    w = ql.WeightSpec(truncation_multiple=6.0)
    theta, trace = ql.density_estimate(ode_field_dense, QUENCH, w, 1e-3, 0.2)
    assert theta == pytest.approx(THETA_COLLAPSE_P3, abs=0.05)
    assert not trace.diverging
    assert trace.violations == []
    assert trace.theta_estimate == theta
    assert np.all(np.diff(trace.s_samples) > 0)
    # at a rupture point the whole Ebar ladder stays above the density
    # (monotone decrease toward it, up to the exponential slack)
    assert np.all(trace.Ebar_values >= theta - 0.05)


def test_density_estimate_diverges_at_positivity_point(ode_field_dense):
    w = ql.WeightSpec(truncation_multiple=6.0)
    x0 = ql.ParabolicPoint((0.0,), -0.25)   # u(x0) = 1 here
    theta, trace = ql.density_estimate(ode_field_dense, x0, w, 1e-4, 0.2, u_floor=1e-6)
    assert theta is None
    assert trace.diverging


def test_density_estimate_usage_errors(ode_field_dense):
    w = ql.WeightSpec()
    with pytest.raises(UsageError):
        ql.density_estimate(ode_field_dense, QUENCH, w, 0.2, 0.2)
    with pytest.raises(UsageError):   # ladder too short
        ql.density_estimate(ode_field_dense, QUENCH, w, 0.1, 0.2)


def test_frequency_abs_x1():
    f = abs_x1_field()
    x0 = ql.ParabolicPoint((0.0,), 0.5)
    for s in (0.1, 0.5, 1.0):
        H, D, N = ql.frequency(f, x0, s, BARE)
        assert H == pytest.approx(2.0 * s, rel=1e-6)
        assert D == pytest.approx(s, rel=1e-6)
        assert N == pytest.approx(0.5, abs=1e-5)


def test_frequency_abs_x1x2():
    mp = ql.ModelParams(p=3.0, n=2)
    grid = ql.GridSpec(origin=[-6.0, -6.0], extent=[12.0, 12.0], cells=[384, 384],
                       time_start=-1.0, time_end=1.0)
    f = ql.profile_field(mp, grid, [-1.0, 0.0, 1.0], "abs_x1x2")
    x0 = ql.ParabolicPoint((0.0, 0.0), 0.5)
    for s in (0.05, 0.2, 0.5):
        H, D, N = ql.frequency(f, x0, s, BARE)
        assert H == pytest.approx(4.0 * s ** 2, rel=1e-3)
        assert D == pytest.approx(4.0 * s ** 2, rel=1e-3)
        assert N == pytest.approx(1.0, abs=5e-3)


def test_frequency_constant_field(p3_1d):
    grid = ql.GridSpec(origin=[-6.0], extent=[12.0], cells=[1024],
                       time_start=-1.0, time_end=0.0)
    f = ql.profile_field(p3_1d, grid, [-1.0, 0.0], "constant", exponent=0.7)
    H, D, N = ql.frequency(f, ql.ParabolicPoint((0.0,), 0.0), 0.25, BARE)
    assert H == pytest.approx(0.49, rel=1e-6)
    assert D == pytest.approx(0.0, abs=1e-12)
    assert N == pytest.approx(0.0, abs=1e-10)


def test_frequency_none_when_height_underflows(p3_1d):
    grid = ql.GridSpec(origin=[-6.0], extent=[12.0], cells=[256],
                       time_start=-1.0, time_end=0.0)
    f = ql.profile_field(p3_1d, grid, [-1.0, 0.0], "constant", exponent=1.0)
    zero = ql.SpaceTimeField(p3_1d, grid, f.times, np.zeros_like(f.values))
    H, D, N = ql.frequency(zero, ql.ParabolicPoint((0.0,), 0.0), 0.25, BARE)
    assert H == 0.0 and N is None


def test_almgren_scan_oracles():
    f = abs_x1_field()
    x0 = ql.ParabolicPoint((0.0,), 0.5)
    s_grid = np.geomspace(0.1, 1.0, 16)
    tr = ql.almgren_scan(f, x0, BARE, s_grid, gamma_half_reference=0.5)
    assert tr.max_reference_gap <= 1e-3
    assert tr.violations == []
    assert tr.monotonicity_claimed
    assert ql.log_h_identity_error(tr) <= 0.05


def test_almgren_scan_claim_flag_off_for_noncaloric(ode_field_dense):
    tr = ql.almgren_scan(ode_field_dense, QUENCH, ql.WeightSpec(eta=None),
                         np.geomspace(0.01, 0.1, 6), caloric=False)
    assert not tr.monotonicity_claimed
    assert tr.violations == []   # no claim, nothing flagged


def test_almgren_scan_requires_increasing_grid(ode_field_dense):
    with pytest.raises(UsageError):
        ql.almgren_scan(ode_field_dense, QUENCH, BARE, [0.2, 0.1])


def test_energy_scaling_covariance(p3_1d, ode_field_dyadic):
    # E(s; 0, rescale(u, lam)) = E(lam^2 s; X0, u) for the bare weight
    f = ode_field_dyadic
    lam = 2.0
    tg = ql.GridSpec(origin=[-0.25], extent=[0.5], cells=[64],
                     time_start=-0.125, time_end=-2.0 ** -36)
    v = ql.rescale(f, ql.BlowupSpec(QUENCH, lam), tg, ql.dyadic_times(-0.125, 30))
    w = ql.WeightSpec(truncation_multiple=6.0, eta=None)
    # keep the truncation ball 6 sqrt(s) inside the rescaled window
    for s in (1e-3, 5e-4):
        a = ql.weighted_energy(v, QUENCH, s, w)
        b = ql.weighted_energy(f, QUENCH, lam ** 2 * s, w)
        assert a == pytest.approx(b, rel=1e-10)


def test_kernel_tail_mass_bound():
    # heat kernel mass beyond k standard deviations (sigma = sqrt(2s)): below
    # 1e-8 at k = 6 in one dimension, below 1e-7 through n = 3, and the
    # reported bound at the k sqrt(s) truncation radius is the honest,
    # larger figure
    from scipy.special import gammaincc

    def beyond_sigma(n, k):
        return float(gammaincc(n / 2.0, (k * np.sqrt(2.0)) ** 2 / 4.0))

    assert beyond_sigma(1, 6.0) < 1e-8
    for n in (1, 2, 3):
        assert beyond_sigma(n, 6.0) < 1e-7
        assert beyond_sigma(n, 7.0) < 1e-8
        w = ql.WeightSpec(truncation_multiple=8.0, eta=None)
        assert w.tail_bound(n) < 1e-6


def test_trace_invariants_enforced():
    with pytest.raises(Exception):
        ql.MonotonicityTrace(base_point=QUENCH, s_samples=np.array([0.2, 0.1]),
                             E_values=np.zeros(2), Ebar_values=np.zeros(2),
                             theta_estimate=None, diverging=False, violations=[])
    with pytest.raises(Exception):
        ql.FrequencyTrace(base_point=QUENCH, s_samples=np.array([0.1, 0.2]),
                          H_values=np.array([-1.0, 1.0]), D_values=np.ones(2),
                          N_values=np.ones(2))

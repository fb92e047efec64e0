import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import sici

from canonlab import averaging
from canonlab.averaging import (ABS_COS, ABS_COS_LOG, AverageReport, BudgetExceeded,
                                GeneralizedNumber, Phase, abs_cos_inverse, abs_cos_log,
                                associated_value, cesaro_average, cesaro_estimate,
                                constant_number, p_rescaling_study, rms_average, sweep_average)

TWO_OVER_PI = 2 / math.pi


def log_window_oracle():
    # A(eta) = int_0^inf |cos(s0 + v)| e^-v dv with s0 = log(1/eta); periodic in s0
    def A(s0):
        kinks = [(k + 0.5) * math.pi - s0 for k in range(0, 20)]
        pts = [p for p in kinks if 0 < p < 60]
        return quad(lambda v: abs(math.cos(s0 + v)) * math.exp(-v), 0, 60, points=pts, limit=400)[0]

    vals = [A(s) for s in np.linspace(0, math.pi, 721)]
    return min(vals), max(vals)


def test_phase_maps_are_inverse():
    for ph in (Phase("power", 2.0, 3.0), Phase("log", 1.5)):
        eps = np.array([1e-1, 1e-3, 1e-6])
        assert np.allclose(ph.eps_of(ph.theta(eps)), eps, rtol=1e-12)


def test_phase_weight_is_derivative():
    ph = Phase("power", 1.5, 2.0)
    th, h = 50.0, 1e-4
    fd = -(ph.eps_of(th + h) - ph.eps_of(th - h)) / (2 * h)
    assert abs(ph.weight(th) - fd) < 1e-8 * ph.weight(th)


def test_unknown_phase_kind():
    with pytest.raises(ValueError):
        Phase("exp")


def test_abs_cos_average_two_over_pi():
    assert abs(cesaro_average(abs_cos_inverse(), 1e-3, 1e-5) - TWO_OVER_PI) < 1e-3


@pytest.mark.parametrize("g", [1.0, 3.0])
def test_phase_and_dyadic_estimators_agree(g):
    gn = abs_cos_inverse(g)
    a = cesaro_average(gn, 1e-2, 1e-3, "phase")
    b = cesaro_average(gn, 1e-2, 1e-3, "dyadic")
    assert abs(a - b) < 2e-3


def test_constant_average():
    assert abs(cesaro_average(constant_number(0.7), 1e-3, 1e-6) - 0.7) < 1e-9


def test_black_box_falls_back_to_dyadic():
    gn = GeneralizedNumber(lambda e: 0.5 + 0.0 * e, 1.0, "half")
    est = cesaro_estimate(gn, 1e-2, 1e-4)
    assert est.method == "dyadic" and abs(est.value - 0.5) < 1e-10


def test_scaling_equivariance():
    gn = abs_cos_inverse(2.0)
    a = cesaro_average(gn, 1e-2, 1e-5)
    b = cesaro_average(gn.scaled(3.0), 1e-2, 3e-5)
    assert abs(b - 3 * a) < 1e-4


def test_jensen_rms_at_least_mean():
    gn = abs_cos_inverse()
    m = cesaro_average(gn, 1e-2, 1e-5)
    r = rms_average(gn, 1e-2, 1e-5)
    assert r**2 >= m**2 - 1e-4
    # (1/eta) int_0^eta cos^2(1/e) de = 1/2 + (1/2eta) int_{1/eta}^inf cos(2u)/u^2 du
    a = 1 / 1e-2
    tail = math.cos(2 * a) / a - 2 * (math.pi / 2 - sici(2 * a)[0])
    assert abs(r**2 - (0.5 + tail / (2 * 1e-2))) < 1e-4


def test_rms_rejects_negative_values():
    gn = GeneralizedNumber.oscillating(np.cos, 2 * math.pi, Phase("power"), 1.0, "cos")
    with pytest.raises(ValueError):
        rms_average(gn, 1e-2)


def test_missing_bound_rejected():
    gn = GeneralizedNumber(lambda e: np.sin(1 / e), None, "no bound")
    with pytest.raises(ValueError):
        cesaro_average(gn, 1e-2)


def test_budget_exceeded_carries_partial():
    gn = GeneralizedNumber(lambda e: np.abs(np.cos(1 / e**2)), 1.0, "fast")
    with pytest.raises(BudgetExceeded) as err:
        cesaro_average(gn, 1e-2, 1e-6, "dyadic", budget=20_000)
    assert err.value.partial is not None


def test_log_window_matches_oracle():
    lo, hi = log_window_oracle()
    rep = associated_value(abs_cos_log(), [10.0**-k for k in range(2, 9)], 1e-4)
    assert rep.limit is None
    assert abs(rep.liminf - lo) < 2e-3 and abs(rep.limsup - hi) < 2e-3


def test_limit_reported_when_cauchy():
    rep = associated_value(abs_cos_inverse(), [10.0**-k for k in range(2, 8)], 1e-4)
    assert rep.limit is not None and abs(rep.limit - TWO_OVER_PI) < 1e-3
    assert rep.liminf <= rep.limit <= rep.limsup


def test_ladder_needs_six_decreasing_points():
    with pytest.raises(ValueError):
        associated_value(abs_cos_inverse(), [1e-2, 1e-3, 1e-4], 1e-4)
    with pytest.raises(ValueError):
        associated_value(abs_cos_inverse(), [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1], 1e-4)


def test_report_json_roundtrip():
    rep = associated_value(constant_number(1.0), [10.0**-k for k in range(1, 7)], 1e-6)
    d = json.loads(rep.to_json())
    assert list(d) == sorted(d)
    assert AverageReport.from_dict(d).limit == rep.limit


def test_p_rescaling_identity_profile():
    study = p_rescaling_study(ABS_COS, [1, 2, 3], [10.0**-k for k in range(2, 8)], 1e-4)
    for r in study.reports.values():
        assert abs(r.limit - TWO_OVER_PI) < 5e-3
    assert study.spread < 5e-3


def test_p_rescaling_log_profile_moves_window():
    study = p_rescaling_study(ABS_COS_LOG, [1, 2], [10.0**-k for k in range(2, 8)], 1e-4)
    assert all(w > 0.2 for w in study.widths.values())


def test_sweep_trapezoid_on_smooth_samples():
    eps = np.logspace(-6, -1, 2000)
    rep = sweep_average(list(zip(eps, 1 + eps)), "trapezoid")
    assert abs(rep.limit - 1.0) < 1e-3


def test_sweep_random_abs_cos():
    # log-uniform random eps: a logspace grid would lock the phases 1/eps mod pi
    eps = 10 ** np.random.default_rng(11).uniform(-6, -2, 20_000)
    vals = np.abs(np.cos(1 / eps))
    rep = sweep_average(list(zip(eps, vals)), "random", seed=3, subsample=10_000)
    assert abs(rep.limit - TWO_OVER_PI) < 1e-2
    again = sweep_average(list(zip(eps, vals)), "random", seed=3, subsample=10_000)
    assert again.to_json() == rep.to_json()


def test_sweep_random_interleaved_constants_window():
    eps = np.logspace(-6, -1, 1000)
    vals = np.where(np.arange(eps.size) % 2 == 0, 0.2, 0.9)
    rep = sweep_average(list(zip(eps, vals)), "random", seed=0)
    assert (rep.liminf, rep.limsup) == (0.2, 0.9)


def test_sweep_rejects_duplicates_and_bad_mode():
    s = [(0.1, 1.0)] * 10
    with pytest.raises(ValueError):
        sweep_average(s)
    eps = np.logspace(-3, -1, 20)
    with pytest.raises(ValueError):
        sweep_average(list(zip(eps, eps)), "median")

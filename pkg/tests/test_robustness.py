import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustreg.datasets import load_shock, load_taylor
from robustreg.estimation import IRLSOptions, ImproperModelError, RankDeficientError, fit_m_irls, fit_ols
from robustreg.models import ErrorModel
from robustreg.robustness import (
    PathExperiment, coef_distance, compare_with_without, improper_limit_ratio, limit_ratio,
    path_increments, run_path, total_mass,
)

Y_GRID = (1e3, 1e6, 1e9, 1e12)


def test_limit_ratio_identity_at_unit_scale():
    m = ErrorModel.lptn(0.9)
    for y in (0.5, 1.0, 2.0, 1e3, 1e9, -7.0):
        assert limit_ratio(m, [0.0], 1.0, [1.0], y) == pytest.approx(1.0, abs=1e-15)


def test_student_limit_ratio_tends_to_sigma_power_nu():
    m = ErrorModel.student_t(4)
    assert limit_ratio(m, [0.0], 2.0, [1.0], 1e9) == pytest.approx(16.0, abs=1e-3)
    # independent closed form of the tail ratio
    y, s, nu = 1e4, 2.0, 4.0
    closed = (1 / s) * (1 + (y / s) ** 2 / nu) ** (-(nu + 1) / 2) / (1 + y**2 / nu) ** (-(nu + 1) / 2)
    assert limit_ratio(m, [0.0], s, [1.0], y) == pytest.approx(closed, rel=1e-10)


def test_lptn_limit_ratio_matches_branch_formula():
    m = ErrorModel.lptn(0.9)
    tau, lam = m.tau, m.lam
    phi_tau = math.exp(-0.5 * tau * tau) / math.sqrt(2 * math.pi)
    f = lambda e: phi_tau * tau / abs(e) * (math.log(tau) / math.log(abs(e))) ** lam
    y, mu, s = 1e6, 3.0, 2.0
    assert limit_ratio(m, [3.0], s, [1.0], y) == pytest.approx(f((y - mu) / s) / s / f(y), rel=1e-10)


@pytest.mark.parametrize("rho", [0.7, 0.8, 0.9, 0.95])
@pytest.mark.parametrize("mu,sigma", [(0.0, 0.5), (3.0, 2.0), (-5.0, 5.0), (10.0, 0.2)])
def test_lptn_limit_ratio_approaches_one_monotonically(rho, mu, sigma):
    m = ErrorModel.lptn(rho)
    gaps = [abs(limit_ratio(m, [mu], sigma, [1.0], y) - 1.0) for y in Y_GRID]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_limit_ratio_rejects_improper():
    with pytest.raises(ImproperModelError):
        limit_ratio(ErrorModel.tukey(), [0.0], 1.0, [1.0], 10.0)
    with pytest.raises(ValueError):
        limit_ratio(ErrorModel.lptn(), [0.0], 0.0, [1.0], 10.0)


def test_improper_ratio_for_tukey_is_exactly_one_over_sigma():
    m = ErrorModel.tukey()
    for y in (1e3, 1e9):
        assert improper_limit_ratio(m, [2.0], 3.0, [1.0], y) == pytest.approx(1 / 3.0, rel=1e-15)


@given(y=st.floats(20, 1e12), mu=st.floats(-5, 5), sigma=st.floats(0.5, 3))
def test_tukey_log_g_constant_in_y(y, mu, sigma):
    m = ErrorModel.tukey()
    if abs(y - mu) / sigma > m.k:
        assert m.log_g((y - mu) / sigma) == -1.0


@pytest.mark.parametrize("model", [ErrorModel.normal(), ErrorModel.huber(1.0), ErrorModel.huber(),
                                   ErrorModel.huber(2.0), ErrorModel.student_t(1),
                                   ErrorModel.student_t(4), ErrorModel.student_t(10),
                                   ErrorModel.lptn(0.7), ErrorModel.lptn(0.9), ErrorModel.lptn(0.95)],
                         ids=lambda m: m.label())
def test_total_mass_is_one(model):
    assert total_mass(model) == pytest.approx(1.0, abs=1e-6)


def test_improper_lptn_mass_grows_like_loglog():
    m = ErrorModel.improper_lptn(rho=0.9)
    masses = [total_mass(m, r) for r in (1e3, 1e6, 1e12, 1e24)]
    assert all(b > a for a, b in zip(masses, masses[1:]))
    # with lam = 1 the tail mass is 2 phi(tau) tau log(tau) * [log log R - log log tau]
    tau = m.tau
    c = 2 * math.exp(-0.5 * tau * tau) / math.sqrt(2 * math.pi) * math.sqrt(2 * math.pi) * tau * math.log(tau)
    assert masses[1] - masses[0] == pytest.approx(c * (math.log(math.log(1e6)) - math.log(math.log(1e3))), rel=1e-8)
    with pytest.raises(ValueError):
        total_mass(m)


def test_truncated_proper_mass_below_one():
    m = ErrorModel.lptn(0.9)
    assert total_mass(m, 10.0) < total_mass(m, 1e6) < 1.0


# -- paths ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def shock_path():
    data = load_shock()
    exp = PathExperiment(data, (5,), (10.0, 100.0, 1e3, 1e4, 1e5, 1e6),
                         model_set=(ErrorModel.tukey(), ErrorModel.lptn(0.9), ErrorModel.student_t(4)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_path(exp)


def test_path_tukey_bit_stable(shock_path):
    recs = shock_path.for_model("tukey(k=4.685)")
    assert all(abs(r.target_std_residuals[0]) > 4.685 for r in recs)
    assert all(r.target_weights[0] == 0.0 for r in recs)
    for a, b in zip(recs, recs[1:]):
        assert np.max(np.abs(a.beta_hat - b.beta_hat)) <= 1e-10
        assert abs(a.sigma_hat - b.sigma_hat) <= 1e-10


def test_path_lptn_increments_strictly_decrease(shock_path):
    inc = path_increments(shock_path.for_model("lptn(rho=0.9)"))
    assert all(v > 0 for v in inc)
    assert all(b < a for a, b in zip(inc, inc[1:]))


def test_path_records_ratios_for_proper_models_only(shock_path):
    assert len(shock_path.records) == 3 * 6
    for r in shock_path.records:
        assert (r.ratio is None) == r.model.startswith("tukey")
    t = shock_path.for_model("student_t(nu=4)")
    # partial robustness: the ratio settles near sigma^nu, not 1
    assert t[-1].ratio == pytest.approx(t[-1].sigma_hat ** 4, rel=1e-3)
    assert len(shock_path.rows()) == 18


def test_path_single_magnitude_bookkeeping():
    data = load_shock()
    models = (ErrorModel.tukey(), ErrorModel.huber())
    trace = run_path(PathExperiment(data, (2,), (50.0,), "negative", models))
    assert len(trace.records) == 2
    assert trace.records[0].target_std_residuals[0] < 0


def test_path_experiment_validation():
    data = load_shock()
    with pytest.raises(ValueError):
        PathExperiment(data, (1, 1), (10.0,))
    with pytest.raises(ValueError):
        PathExperiment(data, (99,), (10.0,))
    with pytest.raises(ValueError):
        PathExperiment(data, (1,), (10.0, 5.0))
    with pytest.raises(ValueError):
        PathExperiment(data, (1,), (10.0,), direction="up")


def test_path_failure_is_recorded(monkeypatch):
    import robustreg.robustness as rb
    from robustreg.estimation import ConvergenceError

    real = rb._fit

    def flaky(data, model, *args):
        if model.family.value == "huber":
            raise ConvergenceError("forced failure")
        return real(data, model, *args)

    monkeypatch.setattr(rb, "_fit", flaky)
    trace = run_path(PathExperiment(load_shock(), (0,), (10.0, 20.0),
                                    model_set=(ErrorModel.huber(), ErrorModel.tukey())))
    failed = trace.for_model("huber(k=1.345)")
    assert [r.error for r in failed] == ["forced failure"] * 2
    assert all(r.beta_hat is None for r in failed)
    assert all(r.error is None for r in trace.for_model("tukey(k=4.685)"))


# -- with / without -------------------------------------------------------------

def test_compare_no_rows_is_zero():
    d, v = compare_with_without(load_shock(), [], ErrorModel.tukey())
    assert d == 0.0 and not v.any()


def test_compare_removing_zero_weight_point():
    # at a fixed scale a zero-weight point does not enter the estimating equations
    data = load_shock()
    fit = fit_m_irls(data, ErrorModel.tukey())
    zero = [int(i) for i in np.flatnonzero(fit.weights == 0.0)]
    opts = IRLSOptions(tol=1e-12, fixed_scale=fit.sigma_hat)
    d, _ = compare_with_without(data, zero[:1], ErrorModel.tukey(), irls_opts=opts)
    assert d <= 1e-6


def test_compare_zero_weight_point_moves_mad_scale():
    # with the MAD re-estimated, dropping an observation shifts the scale and hence the fit
    data = load_shock()
    fit = fit_m_irls(data, ErrorModel.tukey())
    zero = [int(i) for i in np.flatnonzero(fit.weights == 0.0)]
    reduced = fit_m_irls(data.drop_rows(zero[:1]), ErrorModel.tukey())
    assert reduced.sigma_hat != fit.sigma_hat


def test_compare_rank_loss():
    data = load_taylor()
    # AY9 has a single cell; dropping it leaves the AY=9 dummy empty
    row = data.row_ids.index("AY9-DY0")
    with pytest.raises(RankDeficientError):
        compare_with_without(data, [row], ErrorModel.tukey())


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=9, max_size=9))
def test_coef_distance_is_a_metric(vals):
    a, b, c = np.array(vals[:3]), np.array(vals[3:6]), np.array(vals[6:])
    assert coef_distance(a, b) == coef_distance(b, a)
    assert coef_distance(a, a) == 0.0
    assert coef_distance(a, c) <= coef_distance(a, b) + coef_distance(b, c) + 1e-9

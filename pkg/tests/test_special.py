import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustreg.special import log_gamma, normal_cdf, normal_pdf, normal_quantile

# oracle values from a 30-digit independent evaluation
PDF_1_6449 = 0.10312777369994583
CDF_1 = 0.84134474606854295
CDF_1_345 = 0.91068738271566291
Q_095 = 1.6448536269514727
Q_0975 = 1.9599639845400542


def _bisect_quantile(p):
    if p > 0.5:
        return -_bisect_quantile(1.0 - p)
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_pdf_values():
    assert normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    assert normal_pdf(1.6449) == pytest.approx(PDF_1_6449, abs=1e-15)


@given(st.floats(-30, 30))
def test_pdf_symmetric(z):
    assert normal_pdf(z) == normal_pdf(-z)


def test_cdf_values():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.0) == pytest.approx(CDF_1, abs=1e-15)
    assert normal_cdf(1.345) == pytest.approx(CDF_1_345, abs=1e-15)


@given(st.floats(-8, 8))
def test_cdf_reflection(z):
    assert normal_cdf(z) + normal_cdf(-z) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(-8, 8))
def test_cdf_derivative_is_pdf(z):
    h = 1e-5
    fd = (normal_cdf(z + h) - normal_cdf(z - h)) / (2 * h)
    assert abs(fd - normal_pdf(z)) <= 1e-6


@given(st.floats(-8, 8), st.floats(0, 3))
def test_cdf_monotone(z, dz):
    assert normal_cdf(z + dz) >= normal_cdf(z)


def test_quantile_values():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.95) == pytest.approx(Q_095, abs=1e-13)
    assert normal_quantile(0.975) == pytest.approx(Q_0975, abs=1e-13)


def test_quantile_matches_bisection_oracle():
    for p in (1e-10, 0.001, 0.02, 0.3, 0.7, 0.95, 0.999, 1 - 1e-10):
        assert normal_quantile(p) == pytest.approx(_bisect_quantile(p), abs=1e-9)


def test_quantile_roundtrip_grid():
    for p in np.arange(1, 1000) / 1000:
        assert abs(normal_cdf(normal_quantile(p)) - p) <= 1e-10


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_rejects_out_of_range(p):
    with pytest.raises(ValueError):
        normal_quantile(p)


def test_log_gamma_values():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-14)
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-14)


@given(st.floats(0.5, 50))
def test_log_gamma_recurrence(x):
    assert abs(log_gamma(x + 1) - log_gamma(x) - math.log(x)) <= 1e-12


@pytest.mark.parametrize("x", [0.0, -1.0, -0.5])
def test_log_gamma_rejects_nonpositive(x):
    with pytest.raises(ValueError):
        log_gamma(x)

"""Scalar special functions for the standard normal and the gamma function.

``normal_pdf`` accepts numpy arrays as well as floats since the error models
evaluate it elementwise; the other functions are scalar.
"""

import math

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, |relative error| < 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_pdf(z):
    """Standard normal density, elementwise for arrays."""
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF.

    Parameters
    ----------
    p : float
        Probability in the open interval (0, 1).

    Returns
    -------
    float
        ``z`` such that ``normal_cdf(z) == p`` to about 1e-15 absolute.

    Notes
    -----
    Acklam's rational approximation followed by two Halley steps on
    ``normal_cdf``. The upper half is mapped to the lower one through
    ``z(p) = -z(1 - p)``, where ``1 - p`` is exact and ``normal_cdf`` has
    full relative accuracy.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    z = _acklam(p)
    for _ in range(2):
        err = normal_cdf(z) - p
        u = err * _SQRT_2PI * math.exp(0.5 * z * z)
        z = z - u / (1.0 + 0.5 * z * u)
    return z


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0.0:
        raise ValueError(f"log_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)

"""Error models for linear regression: rho, psi, weight and (log) density.

Every family is described by the loss ``rho`` applied to a standardized
residual, its (scaled) derivative ``psi`` and the weight ``W = psi / eps``.
The same family is also viewed as a (possibly improper) error density
``f = g / m``; ``log_g`` returns the unnormalized log density and
``log_density`` subtracts ``log m`` for the proper families.

Scaling conventions (so that the closed forms below hold literally):

=============  ===================  =======================
family         log g                psi
=============  ===================  =======================
normal         -rho / 2             rho' / 2
huber          -rho / 2             rho' / 2
tukey          -rho                 k**2 rho' / 6
student_t      -rho / 2             nu rho' / (2 (nu + 1))
lptn           -rho / 2             rho' / 2
=============  ===================  =======================

All elementwise functions accept floats or numpy arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .special import log_gamma, normal_cdf, normal_pdf, normal_quantile

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
RHO_LOWER = 2.0 * normal_cdf(1.0) - 1.0

DEFAULT_HUBER_K = 1.345
DEFAULT_TUKEY_K = 4.685
DEFAULT_NU = 4.0
DEFAULT_RHO = 0.9


class ImproperModelError(ValueError):
    """Raised when a normalized density is requested from an improper model."""


class Family(str, enum.Enum):
    NORMAL = "normal"
    HUBER = "huber"
    TUKEY = "tukey"
    STUDENT_T = "student_t"
    LPTN = "lptn"
    IMPROPER_LPTN = "improper_lptn"


_ALIASES = {
    "normal": Family.NORMAL, "gaussian": Family.NORMAL, "ols": Family.NORMAL,
    "huber": Family.HUBER,
    "tukey": Family.TUKEY, "biweight": Family.TUKEY, "tukeybiweight": Family.TUKEY,
    "student_t": Family.STUDENT_T, "t": Family.STUDENT_T, "studentt": Family.STUDENT_T,
    "lptn": Family.LPTN,
    "improper_lptn": Family.IMPROPER_LPTN, "improperlptn": Family.IMPROPER_LPTN,
}


def parse_family(name: str | Family) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return _ALIASES[name.strip().lower().replace("-", "_")]
    except KeyError:
        raise ValueError(f"unknown error-model family {name!r}") from None


def lptn_hyperparams(rho: float) -> tuple[float, float]:
    """Threshold ``tau`` and tail exponent ``lam`` of the LPTN density.

    ``tau`` is the central interval half-width holding mass ``rho`` under the
    standard normal and ``lam`` makes the log-Pareto tails carry the
    remaining ``1 - rho``.
    """
    rho = float(rho)
    if not (RHO_LOWER < rho < 1.0):
        raise ValueError(
            f"rho out of admissible range ({RHO_LOWER:.6f}, 1): got {rho!r}")
    tau = normal_quantile(0.5 * (1.0 + rho))
    lam = 1.0 + 2.0 / (1.0 - rho) * float(normal_pdf(tau)) * tau * math.log(tau)
    return tau, lam


@dataclass(frozen=True)
class ErrorModel:
    """An error-model family with its hyperparameters.

    Use the constructors (:meth:`normal`, :meth:`huber`, :meth:`tukey`,
    :meth:`student_t`, :meth:`lptn`, :meth:`improper_lptn`) rather than the
    raw initializer; they derive ``tau``, ``lam`` and ``log_m``.
    """

    family: Family
    k: float | None = None
    nu: float | None = None
    rho: float | None = None
    tau: float | None = None
    lam: float | None = None
    log_m: float | None = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def normal(cls) -> ErrorModel:
        return cls(Family.NORMAL, log_m=LOG_SQRT_2PI)

    @classmethod
    def huber(cls, k: float = DEFAULT_HUBER_K) -> ErrorModel:
        k = _positive(k, "k")
        m = 2.0 * math.exp(-0.5 * k * k) / k + math.sqrt(2.0 * math.pi) * (2.0 * normal_cdf(k) - 1.0)
        return cls(Family.HUBER, k=k, log_m=math.log(m))

    @classmethod
    def tukey(cls, k: float = DEFAULT_TUKEY_K) -> ErrorModel:
        return cls(Family.TUKEY, k=_positive(k, "k"))

    @classmethod
    def student_t(cls, nu: float = DEFAULT_NU) -> ErrorModel:
        nu = _positive(nu, "nu")
        log_m = 0.5 * math.log(math.pi * nu) + log_gamma(0.5 * nu) - log_gamma(0.5 * (nu + 1.0))
        return cls(Family.STUDENT_T, nu=nu, log_m=log_m)

    @classmethod
    def lptn(cls, rho: float = DEFAULT_RHO) -> ErrorModel:
        tau, lam = lptn_hyperparams(rho)
        return cls(Family.LPTN, rho=float(rho), tau=tau, lam=lam, log_m=LOG_SQRT_2PI)

    @classmethod
    def improper_lptn(cls, tau: float | None = None, rho: float | None = None) -> ErrorModel:
        """LPTN with the tail exponent forced to 1 (non-integrable).

        ``tau`` may be given directly; otherwise it is derived from ``rho``
        (default 0.9) exactly as for the proper model.
        """
        if tau is None:
            rho = DEFAULT_RHO if rho is None else rho
            tau, _ = lptn_hyperparams(rho)
        elif rho is not None:
            raise ValueError("give either tau or rho, not both")
        tau = float(tau)
        if not tau > 1.0:
            raise ValueError(f"tau must exceed 1, got {tau!r}")
        return cls(Family.IMPROPER_LPTN, rho=None if rho is None else float(rho), tau=tau, lam=1.0)

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> ErrorModel:
        """Rebuild a model from the flat record produced by :meth:`to_record`."""
        fam = parse_family(rec["family"])
        get = lambda key: None if rec.get(key) in (None, "") else float(rec[key])  # noqa: E731
        if fam is Family.NORMAL:
            return cls.normal()
        if fam is Family.HUBER:
            return cls.huber(get("k") or DEFAULT_HUBER_K)
        if fam is Family.TUKEY:
            return cls.tukey(get("k") or DEFAULT_TUKEY_K)
        if fam is Family.STUDENT_T:
            return cls.student_t(get("nu") or DEFAULT_NU)
        if fam is Family.LPTN:
            return cls.lptn(DEFAULT_RHO if get("rho") is None else get("rho"))
        if get("rho") is not None:
            return cls.improper_lptn(rho=get("rho"))
        return cls.improper_lptn(tau=get("tau"))

    # -- descriptors ------------------------------------------------------

    @property
    def proper(self) -> bool:
        return self.family not in (Family.TUKEY, Family.IMPROPER_LPTN)

    @property
    def is_lptn(self) -> bool:
        return self.family in (Family.LPTN, Family.IMPROPER_LPTN)

    @property
    def threshold(self) -> float | None:
        """Branch point of the piecewise closed forms, if any."""
        if self.family in (Family.HUBER, Family.TUKEY):
            return self.k
        if self.is_lptn:
            return self.tau
        return None

    @property
    def psi_scale(self) -> float:
        """Constant ``c`` with ``psi = c * d rho / d eps``."""
        if self.family is Family.TUKEY:
            return self.k * self.k / 6.0
        if self.family is Family.STUDENT_T:
            return self.nu / (2.0 * (self.nu + 1.0))
        return 0.5

    @property
    def log_g_scale(self) -> float:
        """Constant ``a`` with ``log g = -a * rho``."""
        return 1.0 if self.family is Family.TUKEY else 0.5

    def to_record(self) -> dict[str, Any]:
        return {"family": self.family.value, "k": self.k, "nu": self.nu,
                "rho": self.rho, "tau": self.tau, "lambda": self.lam}

    def label(self) -> str:
        if self.family in (Family.HUBER, Family.TUKEY):
            return f"{self.family.value}(k={self.k:g})"
        if self.family is Family.STUDENT_T:
            return f"student_t(nu={self.nu:g})"
        if self.family is Family.LPTN:
            return f"lptn(rho={self.rho:g})"
        if self.family is Family.IMPROPER_LPTN:
            return f"improper_lptn(tau={self.tau:.6g})"
        return "normal"

    # -- elementwise functions ----------------------------------------------

    def rho_fn(self, eps):
        return rho_fn(self, eps)

    def psi_fn(self, eps):
        return psi_fn(self, eps)

    def weight_fn(self, eps):
        return weight_fn(self, eps)

    def log_g(self, eps):
        return log_g(self, eps)

    def log_density(self, eps):
        return log_density(self, eps)

    def score(self, eps):
        return score(self, eps)


def _positive(v: float, name: str) -> float:
    v = float(v)
    if not (v > 0.0 and math.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {v!r}")
    return v


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def _lptn_tail_abs(a, tau):
    """|eps| clamped into the tail so that log(log(.)) is always defined."""
    return np.maximum(a, tau)


def rho_fn(model: ErrorModel, eps):
    """Loss applied to standardized residuals; even with ``rho(0) = 0``."""
    with np.errstate(over="ignore"):  # e * e on the unused branch for huge e
        return _rho(model, eps)


def _rho(model: ErrorModel, eps):
    e = np.asarray(eps, dtype=float)
    a = np.abs(e)
    fam = model.family
    if fam is Family.NORMAL:
        out = e * e
    elif fam is Family.HUBER:
        k = model.k
        out = np.where(a <= k, e * e, 2.0 * k * a - k * k)
    elif fam is Family.TUKEY:
        u = np.minimum(a / model.k, 1.0)
        out = np.where(a <= model.k, 1.0 - (1.0 - u * u) ** 3, 1.0)
    elif fam is Family.STUDENT_T:
        out = (model.nu + 1.0) * np.log1p(e * e / model.nu)
    else:
        tau, lam = model.tau, model.lam
        at = _lptn_tail_abs(a, tau)
        tail = (tau * tau - 2.0 * math.log(tau) + 2.0 * np.log(at)
                - 2.0 * lam * math.log(math.log(tau)) + 2.0 * lam * np.log(np.log(at)))
        out = np.where(a <= tau, e * e, tail)
    return _out(out, eps)


def psi_fn(model: ErrorModel, eps):
    """Odd influence function (scaled derivative of ``rho``)."""
    e = np.asarray(eps, dtype=float)
    a = np.abs(e)
    fam = model.family
    if fam is Family.NORMAL:
        out = e * 1.0
    elif fam is Family.HUBER:
        out = np.clip(e, -model.k, model.k)
    elif fam is Family.TUKEY:
        u = e / model.k
        out = np.where(a <= model.k, e * (1.0 - u * u) ** 2, 0.0)
    elif fam is Family.STUDENT_T:
        out = e / (1.0 + e * e / model.nu)
    else:
        tau, lam = model.tau, model.lam
        # the tail branch is only selected where |e| > tau > 1, so no division by 0
        es = np.where(a <= tau, 2.0 * tau, e)
        tail = 1.0 / es + lam / (es * np.log(np.abs(es)))
        out = np.where(a <= tau, e, tail)
    return _out(out, eps)


def weight_fn(model: ErrorModel, eps):
    """``W(eps) = psi(eps) / eps`` with ``W(0) = psi'(0) = 1``.

    Values lie in [0, 1] except for the LPTN families just beyond ``tau``,
    where the tail branch exceeds 1 before decaying like ``1 / eps**2``.
    """
    e = np.asarray(eps, dtype=float)
    a = np.abs(e)
    fam = model.family
    if fam is Family.NORMAL:
        out = np.ones_like(e)
    elif fam is Family.HUBER:
        with np.errstate(divide="ignore"):
            out = np.where(a <= model.k, 1.0, model.k / np.where(a == 0.0, 1.0, a))
    elif fam is Family.TUKEY:
        u = e / model.k
        out = np.where(a <= model.k, (1.0 - u * u) ** 2, 0.0)
    elif fam is Family.STUDENT_T:
        out = 1.0 / (1.0 + e * e / model.nu)
    else:
        tau, lam = model.tau, model.lam
        at = _lptn_tail_abs(a, tau)
        tail = 1.0 / (at * at) + lam / (at * at * np.log(at))
        out = np.where(a <= tau, 1.0, tail)
    return _out(out, eps)


def log_g(model: ErrorModel, eps):
    """Unnormalized log density; ``log g(0) = 0`` for every family."""
    r = np.asarray(rho_fn(model, eps))
    return _out(-model.log_g_scale * r, eps)


def log_density(model: ErrorModel, eps):
    """Normalized log density ``log g - log m`` of a proper family."""
    if not model.proper:
        raise ImproperModelError(f"improper model has no density: {model.label()}")
    return _out(np.asarray(log_g(model, eps)) - model.log_m, eps)


def score(model: ErrorModel, eps):
    """Derivative of ``-log g`` with respect to ``eps``."""
    return _out(np.asarray(psi_fn(model, eps)) * (model.log_g_scale / model.psi_scale), eps)


def lptn_continuity_check(model: ErrorModel) -> float:
    """Gap between the central and tail branches of the LPTN density at ``tau``."""
    if not model.is_lptn:
        raise ValueError(f"continuity check needs an LPTN family, got {model.family.value}")
    tau, lam = model.tau, model.lam
    central = float(normal_pdf(tau))
    tail = central * (tau / tau) * (math.log(tau) / math.log(tau)) ** lam
    return abs(central - tail)


def lptn_density_branches(model: ErrorModel, eps):
    """The LPTN density evaluated directly from its two-branch definition."""
    if not model.is_lptn:
        raise ValueError("LPTN family required")
    e = np.asarray(eps, dtype=float)
    a = np.abs(e)
    tau, lam = model.tau, model.lam
    at = _lptn_tail_abs(a, tau)
    tail = float(normal_pdf(tau)) * tau / at * (math.log(tau) / np.log(at)) ** lam
    return _out(np.where(a <= tau, normal_pdf(e), tail), eps)

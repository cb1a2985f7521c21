"""Numerical checks of tail robustness and outlier-sensitivity experiments.

* :func:`limit_ratio` -- the ratio ``(1/sigma) f((y - x'beta)/sigma) / f(y)``
  whose limit as ``|y| -> inf`` separates whole robustness (limit 1) from
  partial robustness (Student t, limit ``sigma**nu``);
* :func:`total_mass` -- quadrature of a density over the real line, or of
  ``g`` over ``[-R, R]`` for improper models;
* :func:`run_path` -- drag chosen responses away from the bulk fit and refit;
* :func:`compare_with_without` -- coefficient change when rows are removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .estimation import (
    FLAT, ConvergenceError, DataError, Dataset, FitResult, IRLSOptions, MAPOptions,
    PriorSpec, coef_distance, fit_m_irls, fit_map, fit_ols,
)
from .models import ErrorModel, Family, ImproperModelError


def log_limit_ratio(model: ErrorModel, beta, sigma: float, x, y: float) -> float:
    """Log of :func:`limit_ratio`; stays finite where the ratio itself would not."""
    if not model.proper:
        raise ImproperModelError(f"improper model has no density: {model.label()}")
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    mu = float(np.dot(np.atleast_1d(x), np.atleast_1d(beta)))
    return (-math.log(sigma) + model.log_density((y - mu) / sigma)
            - model.log_density(float(y)))


def limit_ratio(model: ErrorModel, beta, sigma: float, x, y: float) -> float:
    """``[(1/sigma) f((y - x'beta)/sigma)] / f(y)`` for a proper error model."""
    return math.exp(log_limit_ratio(model, beta, sigma, x, y))


def improper_limit_ratio(model: ErrorModel, beta, sigma: float, x, y: float) -> float:
    """The same ratio built from ``g`` instead of ``f``; defined for any family."""
    mu = float(np.dot(np.atleast_1d(x), np.atleast_1d(beta)))
    return math.exp(-math.log(sigma) + model.log_g((y - mu) / sigma) - model.log_g(float(y)))


def _half_line_mass(fn, threshold: float | None, upper: float = math.inf) -> float:
    """Integral of ``fn`` over ``[0, upper)``.

    Beyond a threshold ``t > 1`` the substitution ``x = exp(exp(s))`` turns
    the slowly decaying log-Pareto tail into an exponentially decaying one.
    """
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=500)
    if threshold is None:
        return integrate.quad(fn, 0.0, upper, **opts)[0]
    t = min(threshold, upper)
    head = integrate.quad(fn, 0.0, t, **opts)[0]
    if upper <= t:
        return head
    if t <= 1.0:
        return head + integrate.quad(fn, t, upper, **opts)[0]

    def tail(s):
        es = math.exp(s)
        x = math.exp(es)
        return fn(x) * x * es

    s_lo = math.log(math.log(t))
    s_hi = math.inf if math.isinf(upper) else math.log(math.log(upper))
    # exp(exp(s)) overflows past s ~ 6.56
    s_cut = 6.0
    if s_hi <= s_cut:
        return head + integrate.quad(tail, s_lo, s_hi, **opts)[0]
    body = integrate.quad(tail, s_lo, s_cut, **opts)[0]
    # A log-Pareto tail is exactly exponential in s; extrapolate the remainder
    # from the decay rate measured just below the cut.
    i1, i0 = tail(s_cut), tail(s_cut - 0.5)
    if i1 <= 0.0:
        return head + body
    rate = 2.0 * (math.log(i0) - math.log(i1))
    if rate <= 0.0:
        raise ValueError("integrand does not decay; mass is infinite")
    rest = i1 / rate
    if not math.isinf(s_hi):
        rest *= -math.expm1(-rate * (s_hi - s_cut))
    return head + body + rest


def total_mass(model: ErrorModel, radius: float | None = None) -> float:
    """Integral of the error density over the line, or of ``g`` over ``[-R, R]``.

    Proper families integrate ``exp(log_density)`` over the whole line unless
    ``radius`` is given. Improper families require ``radius`` and integrate
    ``exp(log_g)``.
    """
    if model.proper and radius is None:
        fn = lambda x: math.exp(model.log_density(x))
        upper = math.inf
    else:
        if radius is None:
            raise ValueError("an improper model needs a finite truncation radius")
        fn = (lambda x: math.exp(model.log_density(x))) if model.proper else \
             (lambda x: math.exp(model.log_g(x)))
        upper = float(radius)
    # all families are symmetric
    return 2.0 * _half_line_mass(fn, model.threshold, upper)


# ---------------------------------------------------------------------------
# outlier paths


@dataclass(frozen=True)
class PathExperiment:
    """Which responses to drag, how far (in bulk-scale units), and which models to refit."""

    base_data: Dataset
    target_rows: tuple[int, ...]
    magnitudes: tuple[float, ...]
    direction: str = "positive"
    model_set: tuple[ErrorModel, ...] = ()

    def __post_init__(self):
        rows = tuple(int(r) for r in self.target_rows)
        if not rows or len(set(rows)) != len(rows):
            raise ValueError("target rows must be distinct and non-empty")
        if min(rows) < 0 or max(rows) >= self.base_data.n:
            raise ValueError("target row out of range")
        mags = tuple(float(m) for m in self.magnitudes)
        if not mags or any(m <= 0 for m in mags) or any(b <= a for a, b in zip(mags, mags[1:])):
            raise ValueError("magnitudes must be positive and strictly increasing")
        if self.direction not in ("positive", "negative"):
            raise ValueError("direction must be 'positive' or 'negative'")
        models = tuple(self.model_set) or (ErrorModel.tukey(), ErrorModel.lptn())
        object.__setattr__(self, "target_rows", rows)
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "model_set", models)


@dataclass(frozen=True)
class PathRecord:
    model: str
    magnitude: float
    beta_hat: np.ndarray | None
    sigma_hat: float
    target_weights: tuple[float, ...]
    target_std_residuals: tuple[float, ...]
    ratio: float | None
    error: str | None = None


@dataclass
class PathTrace:
    experiment: PathExperiment
    bulk_beta: np.ndarray
    bulk_sigma: float
    records: list[PathRecord] = field(default_factory=list)

    def for_model(self, label: str) -> list[PathRecord]:
        return [r for r in self.records if r.model == label]

    def rows(self) -> list[dict]:
        """Flat records, one per (model, magnitude)."""
        out = []
        labels = self.experiment.base_data.column_labels
        for r in self.records:
            row = {"model": r.model, "magnitude": r.magnitude, "sigma_hat": r.sigma_hat,
                   "ratio": r.ratio, "error": r.error}
            for j, t in enumerate(self.experiment.target_rows):
                row[f"weight[{t}]"] = r.target_weights[j] if r.target_weights else None
                row[f"std_residual[{t}]"] = (r.target_std_residuals[j]
                                             if r.target_std_residuals else None)
            for j, lab in enumerate(labels):
                row[lab] = None if r.beta_hat is None else float(r.beta_hat[j])
            out.append(row)
        return out


def _fit(data: Dataset, model: ErrorModel, prior: PriorSpec, irls_opts, map_opts) -> FitResult:
    if model.family is Family.NORMAL and prior.is_flat:
        return fit_ols(data)
    if model.family in (Family.HUBER, Family.TUKEY) and prior.is_flat:
        return fit_m_irls(data, model, irls_opts)
    return fit_map(data, model, prior, map_opts)


def run_path(exp: PathExperiment, prior: PriorSpec = FLAT,
             irls_opts: IRLSOptions | None = None,
             map_opts: MAPOptions | None = None) -> PathTrace:
    """Move the target responses to ``x_j' beta_bulk +/- m sigma_bulk`` and refit.

    The bulk fit is Tukey IRLS on the data without the targets; ``x`` stays
    fixed. Refit failures are recorded in the trace rather than raised.
    """
    # tight tolerance so that estimates that should be identical are bit-stable
    irls_opts = irls_opts or IRLSOptions(tol=1e-14, max_iter=2000)
    base = exp.base_data
    bulk = fit_m_irls(base.drop_rows(exp.target_rows), ErrorModel.tukey(), irls_opts)
    sign = 1.0 if exp.direction == "positive" else -1.0
    targets = list(exp.target_rows)
    trace = PathTrace(exp, bulk.beta_hat, bulk.sigma_hat)
    for m in exp.magnitudes:
        y = np.array(base.y)
        y[targets] = base.X[targets] @ bulk.beta_hat + sign * m * bulk.sigma_hat
        data = base.with_y(y)
        for model in exp.model_set:
            try:
                fit = _fit(data, model, prior, irls_opts, map_opts)
            except (ConvergenceError, DataError, ValueError) as err:
                trace.records.append(PathRecord(model.label(), m, None, math.nan, (), (),
                                                None, str(err)))
                continue
            ratio = None
            if model.proper:
                t = targets[0]
                ratio = limit_ratio(model, fit.beta_hat, fit.sigma_hat, base.X[t], float(y[t]))
            trace.records.append(PathRecord(
                model.label(), m, fit.beta_hat, fit.sigma_hat,
                tuple(float(fit.weights[t]) for t in targets),
                tuple(float(fit.std_residuals[t]) for t in targets),
                ratio))
    return trace


def path_increments(records: Sequence[PathRecord]) -> list[float]:
    """``sum |beta_{m+1} - beta_m|`` between consecutive magnitudes."""
    betas = [r.beta_hat for r in records if r.beta_hat is not None]
    return [coef_distance(a, b) for a, b in zip(betas, betas[1:])]


def compare_with_without(data: Dataset, outlier_rows: Sequence[int], model: ErrorModel,
                         prior: PriorSpec = FLAT, irls_opts: IRLSOptions | None = None,
                         map_opts: MAPOptions | None = None):
    """Refit without ``outlier_rows``; return ``(sum |delta beta|, delta beta)``.

    Raises :class:`~robustreg.estimation.RankDeficientError` if the reduced
    design loses full rank.
    """
    full = _fit(data, model, prior, irls_opts, map_opts)
    if len(outlier_rows) == 0:
        return 0.0, np.zeros(data.p)
    reduced = _fit(data.drop_rows(outlier_rows), model, prior, irls_opts, map_opts)
    delta = reduced.beta_hat - full.beta_hat
    return float(np.sum(np.abs(delta))), delta


__all__ = [
    "PathExperiment", "PathRecord", "PathTrace", "coef_distance", "compare_with_without",
    "improper_limit_ratio", "limit_ratio", "log_limit_ratio", "path_increments", "run_path",
    "total_mass",
]

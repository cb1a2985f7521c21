"""Linear-regression fits under the error models of :mod:`robustreg.models`.

Three estimators share one :class:`FitResult`:

* :func:`fit_ols` -- least squares through a QR factorization;
* :func:`fit_m_irls` -- M-estimation by iteratively reweighted least squares
  with a MAD scale re-estimated at every iteration;
* :func:`fit_map` -- maximizer of the (generalized) log posterior
  ``log pi(beta, sigma) + sum_i [log g(r_i / sigma) - log sigma]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .models import ErrorModel, Family, ImproperModelError
from .optimize import nelder_mead
from .special import log_gamma

MAD_CONSTANT = 1.4826


class DataError(ValueError):
    """Invalid data or design."""


class RankDeficientError(DataError):
    """The design matrix does not have full column rank."""


class ConvergenceError(RuntimeError):
    """An estimator could not produce a usable fit."""


class DegenerateScaleError(ConvergenceError):
    """The robust scale estimate is zero (all residuals equal)."""


# ---------------------------------------------------------------------------
# data containers


def _rank(X: np.ndarray) -> int:
    if X.size == 0:
        return 0
    _, R, _ = scipy.linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return 0
    tol = d[0] * max(X.shape) * np.finfo(float).eps
    return int(np.sum(d > tol))


@dataclass(frozen=True)
class Dataset:
    """Response vector, design matrix, and labels."""

    y: np.ndarray
    X: np.ndarray
    column_labels: tuple[str, ...]
    row_ids: tuple[str, ...]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n, p = X.shape
        if y.size != n:
            raise DataError(f"y has {y.size} entries but X has {n} rows")
        if len(self.column_labels) != p:
            raise DataError("one column label per design column is required")
        if len(self.row_ids) != n:
            raise DataError("one row id per observation is required")
        if p < 1 or n < p:
            raise DataError(f"need n >= p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("non-finite values in data")
        if _rank(X) < p:
            raise RankDeficientError(f"design matrix is rank deficient (p={p})")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_labels", tuple(self.column_labels))
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))

    @classmethod
    def from_arrays(cls, X, y, column_labels=None, row_ids=None) -> Dataset:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        labels = column_labels or [f"x{j}" for j in range(X.shape[1])]
        ids = row_ids or [str(i) for i in range(X.shape[0])]
        return cls(np.asarray(y, dtype=float), X, tuple(labels), tuple(ids))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def drop_rows(self, rows: Iterable[int]) -> Dataset:
        """Copy without the given row positions; full rank is rechecked."""
        rows = sorted(set(int(r) for r in rows))
        keep = np.setdiff1d(np.arange(self.n), rows)
        return Dataset(self.y[keep], self.X[keep], self.column_labels,
                       tuple(self.row_ids[i] for i in keep))

    def with_y(self, y) -> Dataset:
        return Dataset(np.asarray(y, dtype=float), self.X, self.column_labels, self.row_ids)


@dataclass(frozen=True)
class CategoricalTerm:
    field: str
    levels: tuple[str, ...]
    reference: str | None = None

    def __post_init__(self):
        levels = tuple(str(v) for v in self.levels)
        if len(set(levels)) != len(levels) or not levels:
            raise DataError(f"levels of {self.field!r} must be distinct and non-empty")
        ref = levels[0] if self.reference is None else str(self.reference)
        if ref not in levels:
            raise DataError(f"reference level {ref!r} not among levels of {self.field!r}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "reference", ref)


@dataclass(frozen=True)
class DesignSpec:
    """How to turn records into a design matrix.

    Columns are ordered intercept, numeric fields in declared order, then one
    dummy per non-reference level of each categorical field in level order.
    """

    response: str
    intercept: bool = True
    numeric_columns: tuple[str, ...] = ()
    categorical_columns: tuple[CategoricalTerm, ...] = ()
    log_response: bool = False
    row_id: str | None = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> DesignSpec:
        cats = []
        for c in d.get("categorical", d.get("categorical_columns", [])):
            cats.append(CategoricalTerm(c["field"], tuple(c["levels"]), c.get("reference")))
        return cls(
            response=d["response"],
            intercept=bool(d.get("intercept", True)),
            numeric_columns=tuple(d.get("numeric", d.get("numeric_columns", []))),
            categorical_columns=tuple(cats),
            log_response=bool(d.get("log_response", False)),
            row_id=d.get("row_id"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "response": self.response,
            "intercept": self.intercept,
            "numeric": list(self.numeric_columns),
            "categorical": [{"field": c.field, "levels": list(c.levels), "reference": c.reference}
                            for c in self.categorical_columns],
            "log_response": self.log_response,
            "row_id": self.row_id,
        }


def build_design(records: Sequence[Mapping[str, Any]], spec: DesignSpec) -> Dataset:
    """Build a :class:`Dataset` from a list of record mappings."""
    if not records:
        raise DataError("no records")
    labels: list[str] = []
    if spec.intercept:
        labels.append("(Intercept)")
    labels.extend(spec.numeric_columns)
    for term in spec.categorical_columns:
        labels.extend(f"{term.field}={lv}" for lv in term.levels if lv != term.reference)

    n = len(records)
    X = np.zeros((n, len(labels)))
    y = np.empty(n)
    row_ids = []
    for i, rec in enumerate(records):
        j = 0
        if spec.intercept:
            X[i, 0] = 1.0
            j = 1
        for name in spec.numeric_columns:
            X[i, j] = float(rec[name])
            j += 1
        for term in spec.categorical_columns:
            value = str(rec[term.field])
            if value not in term.levels:
                raise DataError(f"row {i}: unseen level {value!r} for {term.field!r}")
            for lv in term.levels:
                if lv == term.reference:
                    continue
                X[i, j] = 1.0 if value == lv else 0.0
                j += 1
        v = float(rec[spec.response])
        if spec.log_response:
            if not v > 0.0:
                raise DataError(f"row {i}: non-positive response {v!r} under log transform")
            v = math.log(v)
        y[i] = v
        if spec.row_id is not None:
            row_ids.append(str(rec[spec.row_id]))
        else:
            row_ids.append(str(i))
    return Dataset(y, X, tuple(labels), tuple(row_ids))


@dataclass(frozen=True)
class PriorSpec:
    """Flat prior or normal-inverse-gamma prior on ``(beta, sigma)``.

    Under NIG, ``beta | sigma ~ N(mu_beta, sigma**2 Sigma_beta)`` and
    ``sigma**2 ~ InvGamma(ig_shape, ig_scale)``; the density is expressed
    with respect to ``sigma`` (Jacobian ``2 sigma`` included).
    """

    kind: str = "flat"
    mu_beta: np.ndarray | None = None
    Sigma_beta: np.ndarray | None = None
    ig_shape: float = 0.01
    ig_scale: float = 0.01

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("flat", "nig"):
            raise ValueError(f"prior kind must be 'flat' or 'nig', got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "nig":
            mu = np.asarray(self.mu_beta, dtype=float).ravel()
            S = np.asarray(self.Sigma_beta, dtype=float)
            if S.shape != (mu.size, mu.size):
                raise ValueError("Sigma_beta must be p x p with p = len(mu_beta)")
            if not np.allclose(S, S.T):
                raise ValueError("Sigma_beta must be symmetric")
            try:
                chol = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise ValueError("Sigma_beta must be positive definite") from None
            if not (self.ig_shape > 0 and self.ig_scale > 0):
                raise ValueError("inverse-gamma shape and scale must be positive")
            object.__setattr__(self, "mu_beta", mu)
            object.__setattr__(self, "Sigma_beta", S)
            object.__setattr__(self, "_chol", chol)
            object.__setattr__(self, "_logdet", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @classmethod
    def flat(cls) -> PriorSpec:
        return cls("flat")

    @classmethod
    def nig(cls, mu_beta, Sigma_beta, ig_shape=0.01, ig_scale=0.01) -> PriorSpec:
        return cls("nig", np.asarray(mu_beta, float), np.asarray(Sigma_beta, float),
                   float(ig_shape), float(ig_scale))

    @classmethod
    def diffuse_nig(cls, p: int, scale: float = 100.0) -> PriorSpec:
        return cls.nig(np.zeros(p), scale * np.eye(p), 0.01, 0.01)

    @property
    def is_flat(self) -> bool:
        return self.kind == "flat"

    def log_density(self, beta: np.ndarray, sigma: float) -> float:
        return self._log_and_grad(beta, math.log(sigma))[0]

    def _log_and_grad(self, beta, log_sigma):
        p = beta.size
        if self.is_flat:
            return 0.0, np.zeros(p), 0.0
        a, b = self.ig_shape, self.ig_scale
        diff = beta - self.mu_beta
        solved = scipy.linalg.cho_solve((self._chol, True), diff)
        quad = float(diff @ solved)
        inv_s2 = math.exp(-2.0 * log_sigma)
        const = (-0.5 * p * math.log(2.0 * math.pi) - 0.5 * self._logdet
                 + a * math.log(b) - log_gamma(a) + math.log(2.0))
        val = const - (p + 2.0 * a + 1.0) * log_sigma - (0.5 * quad + b) * inv_s2
        g_beta = -solved * inv_s2
        g_ls = -(p + 2.0 * a + 1.0) + 2.0 * (0.5 * quad + b) * inv_s2
        return val, g_beta, g_ls

    def to_record(self) -> dict[str, Any]:
        if self.is_flat:
            return {"kind": "flat"}
        return {"kind": "nig", "mu_beta": self.mu_beta.tolist(),
                "Sigma_beta": self.Sigma_beta.tolist(),
                "ig_shape": self.ig_shape, "ig_scale": self.ig_scale}


FLAT = PriorSpec.flat()


@dataclass(frozen=True)
class FitResult:
    """Estimates and per-observation diagnostics of one fit."""

    beta_hat: np.ndarray
    sigma_hat: float
    weights: np.ndarray
    std_residuals: np.ndarray
    fitted: np.ndarray
    objective: float
    method: str
    model: ErrorModel
    converged: bool
    iterations: int
    column_labels: tuple[str, ...] = ()
    row_ids: tuple[str, ...] = ()
    multistart_record: tuple[tuple[str, float], ...] = ()
    notes: tuple[str, ...] = ()

    def coef(self, label: str) -> float:
        return float(self.beta_hat[self.column_labels.index(label)])

    def to_record(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "model": self.model.to_record(),
            "beta_hat": [float(b) for b in self.beta_hat],
            "column_labels": list(self.column_labels),
            "sigma_hat": float(self.sigma_hat),
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "row_ids": list(self.row_ids),
            "fitted": [float(v) for v in self.fitted],
            "std_residuals": [float(v) for v in self.std_residuals],
            "weights": [float(v) for v in self.weights],
            "multistart_record": [[tag, float(v)] for tag, v in self.multistart_record],
            "notes": list(self.notes),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> FitResult:
        return cls(
            beta_hat=np.asarray(rec["beta_hat"], dtype=float),
            sigma_hat=float(rec["sigma_hat"]),
            weights=np.asarray(rec["weights"], dtype=float),
            std_residuals=np.asarray(rec["std_residuals"], dtype=float),
            fitted=np.asarray(rec["fitted"], dtype=float),
            objective=float(rec["objective"]),
            method=rec["method"],
            model=ErrorModel.from_record(rec["model"]),
            converged=bool(rec["converged"]),
            iterations=int(rec["iterations"]),
            column_labels=tuple(rec["column_labels"]),
            row_ids=tuple(rec["row_ids"]),
            multistart_record=tuple((t, float(v)) for t, v in rec["multistart_record"]),
            notes=tuple(rec.get("notes", ())),
        )


def _make_result(data, model, beta, sigma, objective, method, converged, iterations,
                 record=(), notes=()) -> FitResult:
    fitted = data.X @ beta
    std = (data.y - fitted) / sigma
    return FitResult(
        beta_hat=np.asarray(beta, dtype=float),
        sigma_hat=float(sigma),
        weights=np.asarray(model.weight_fn(std), dtype=float),
        std_residuals=std,
        fitted=fitted,
        objective=float(objective),
        method=method,
        model=model,
        converged=bool(converged),
        iterations=int(iterations),
        column_labels=data.column_labels,
        row_ids=data.row_ids,
        multistart_record=tuple(record),
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# least squares and IRLS


def _lstsq_qr(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= d.max() * max(X.shape) * np.finfo(float).eps:
        raise RankDeficientError("rank-deficient least-squares problem")
    return scipy.linalg.solve_triangular(R, Q.T @ y)


def mad_scale(r: np.ndarray) -> float:
    """Normal-consistent median absolute deviation from the median."""
    r = np.asarray(r, dtype=float)
    return MAD_CONSTANT * float(np.median(np.abs(r - np.median(r))))


def log_likelihood(data: Dataset, model: ErrorModel, beta, sigma: float) -> float:
    """``-n log sigma + sum log g(r_i / sigma)`` (normalizing constant omitted)."""
    e = (data.y - data.X @ beta) / sigma
    return float(-data.n * math.log(sigma) + np.sum(model.log_g(e)))


def fit_ols(data: Dataset) -> FitResult:
    """Ordinary least squares; ``sigma_hat = sqrt(RSS / (n - p))``."""
    beta = _lstsq_qr(data.X, data.y)
    r = data.y - data.X @ beta
    dof = data.n - data.p
    rss = float(r @ r)
    sigma = math.sqrt(rss / dof) if dof > 0 and rss > 0 else 0.0
    model = ErrorModel.normal()
    if sigma == 0.0:
        # exact interpolation: keep residuals finite, weights are all 1 anyway
        fitted = data.X @ beta
        return FitResult(beta, 0.0, np.ones(data.n), np.zeros(data.n), fitted, math.inf,
                         "ols", model, True, 1, data.column_labels, data.row_ids)
    obj = log_likelihood(data, model, beta, sigma) - data.n * model.log_m
    return _make_result(data, model, beta, sigma, obj, "ols", True, 1)


@dataclass
class IRLSOptions:
    """Stopping rule of :func:`fit_m_irls`; ``fixed_scale`` replaces the MAD update."""

    tol: float = 1e-8
    max_iter: int = 500
    fixed_scale: float | None = None


def _irls_run(data: Dataset, model: ErrorModel, beta0: np.ndarray, opts: IRLSOptions):
    beta = np.asarray(beta0, dtype=float).copy()
    # a MAD at rounding level means all residuals are equal up to round-off
    tiny = 64.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(data.y))))
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        r = data.y - data.X @ beta
        sigma = opts.fixed_scale or mad_scale(r)
        if sigma <= tiny:
            raise DegenerateScaleError("MAD of residuals is zero; scale is degenerate")
        w = np.asarray(model.weight_fn(r / sigma), dtype=float)
        sw = np.sqrt(w)
        if np.count_nonzero(w) < data.p:
            raise ConvergenceError("fewer positive weights than coefficients")
        new = _lstsq_qr(data.X * sw[:, None], data.y * sw)
        change = float(np.max(np.abs(new - beta) / (1.0 + np.abs(beta))))
        beta = new
        if change <= opts.tol:
            converged = True
            break
    sigma = opts.fixed_scale or mad_scale(data.y - data.X @ beta)
    if sigma <= tiny:
        raise DegenerateScaleError("MAD of residuals is zero; scale is degenerate")
    return beta, sigma, converged, it


def fit_m_irls(data: Dataset, model: ErrorModel, opts: IRLSOptions | None = None,
               start: np.ndarray | None = None) -> FitResult:
    """M-estimate by IRLS with a MAD scale updated every iteration.

    The redescending Tukey loss is run from the OLS and the Huber solutions
    and the run with the larger ``-n log sigma + sum log g`` is kept.
    """
    opts = opts or IRLSOptions()
    if model.family is Family.NORMAL:
        raise ValueError("use fit_ols for the normal model")
    ols = fit_ols(data)
    starts: list[tuple[str, np.ndarray]]
    if start is not None:
        starts = [("given", np.asarray(start, dtype=float))]
    elif model.family is Family.TUKEY:
        huber = fit_m_irls(data, ErrorModel.huber(), opts)
        starts = [("ols", ols.beta_hat), ("huber", huber.beta_hat)]
    else:
        starts = [("ols", ols.beta_hat)]

    best = None
    record = []
    failure = None
    for tag, b0 in starts:
        try:
            beta, sigma, conv, it = _irls_run(data, model, b0, opts)
        except ConvergenceError as err:
            # a far-off start can leave too few points with positive weight
            record.append((f"{tag}:failed", math.nan))
            failure = err
            continue
        obj = log_likelihood(data, model, beta, sigma)
        record.append((tag, obj))
        if best is None or obj > best[0] + 1e-12:
            best = (obj, beta, sigma, conv, it)
    if best is None:
        raise failure
    obj, beta, sigma, conv, it = best
    notes = () if conv else (f"IRLS did not converge in {opts.max_iter} iterations",)
    return _make_result(data, model, beta, sigma, obj, "irls", conv, it, record, notes)


def estimating_equation_residual(data: Dataset, fit: FitResult) -> float:
    """Max-norm of ``sum_i W(e_i) e_i x_i`` at the fitted values."""
    e = fit.std_residuals
    return float(np.max(np.abs(data.X.T @ (fit.model.weight_fn(e) * e))))


# ---------------------------------------------------------------------------
# posterior and MAP


def log_posterior(data: Dataset, model: ErrorModel, prior: PriorSpec, beta, sigma: float) -> float:
    """Unnormalized log of the (generalized) posterior at ``(beta, sigma)``.

    Proper families use the normalized log density, so with a flat prior
    this is exactly the log-likelihood; improper families use ``log g``.
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    beta = np.asarray(beta, dtype=float)
    e = (data.y - data.X @ beta) / sigma
    terms = model.log_density(e) if model.proper else model.log_g(e)
    return float(prior.log_density(beta, sigma) + np.sum(terms) - data.n * math.log(sigma))


_SMOOTHING_SCHEDULE = (0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 1e-5, 1e-6, 0.0)


def _lptn_pieces(a, tau, lam):
    """Central and tail branches of log g (and derivatives) as functions of |e|."""
    central = -0.5 * a * a
    d_central = -a
    at = np.where(a > 1.0, a, 2.0)  # the tail branch is never selected below tau > 1
    la = np.log(at)
    tail = (-0.5 * tau * tau + math.log(tau) - la
            + lam * math.log(math.log(tau)) - lam * np.log(la))
    d_tail = -(1.0 / at + lam / (at * la))
    return central, d_central, tail, d_tail


def _smoothed_log_g(model: ErrorModel, e: np.ndarray, h: float):
    """``log g`` and its derivative, with the LPTN kink at ``|e| = tau`` rounded.

    On ``tau - h < |e| < tau + h`` the two branches are joined by a cubic
    Hermite patch matching values and slopes at both ends, which makes the
    objective continuously differentiable for ``h > 0``.
    """
    if not model.is_lptn:
        return np.asarray(model.log_g(e)), -np.asarray(model.score(e))
    tau, lam = model.tau, model.lam
    a = np.abs(e)
    c, dc, t, dt = _lptn_pieces(a, tau, lam)
    val = np.where(a <= tau, c, t)
    der = np.where(a <= tau, dc, dt)
    if h > 0.0:
        a0, a1 = tau - h, tau + h
        m = (a > a0) & (a < a1)
        if np.any(m):
            c0, dc0, _, _ = _lptn_pieces(np.array(a0), tau, lam)
            _, _, t1, dt1 = _lptn_pieces(np.array(a1), tau, lam)
            H = a1 - a0
            s = (a[m] - a0) / H
            s2, s3 = s * s, s * s * s
            val = val.copy()
            der = der.copy()
            val[m] = ((2 * s3 - 3 * s2 + 1) * c0 + (s3 - 2 * s2 + s) * H * dc0
                      + (-2 * s3 + 3 * s2) * t1 + (s3 - s2) * H * dt1)
            der[m] = ((6 * s2 - 6 * s) / H * c0 + (3 * s2 - 4 * s + 1) * dc0
                      + (-6 * s2 + 6 * s) / H * t1 + (3 * s2 - 2 * s) * dt1)
    return val, der * np.sign(e)


class _Objective:
    """Negative log posterior over ``theta = (beta, log sigma)`` or ``beta`` alone."""

    def __init__(self, data: Dataset, model: ErrorModel, prior: PriorSpec,
                 fixed_sigma: float | None = None):
        self.data = data
        self.model = model
        self.prior = prior
        self.fixed_sigma = fixed_sigma
        self.const = -data.n * model.log_m if model.proper else 0.0

    def split(self, theta):
        if self.fixed_sigma is None:
            return theta[:-1], theta[-1]
        return theta, math.log(self.fixed_sigma)

    def value(self, theta) -> float:
        beta, ls = self.split(np.asarray(theta, dtype=float))
        if not np.isfinite(ls) or abs(ls) > 700:
            return math.inf
        sigma = math.exp(ls)
        e = (self.data.y - self.data.X @ beta) / sigma
        lg = np.sum(self.model.log_g(e))
        pv = self.prior._log_and_grad(beta, ls)[0] if not self.prior.is_flat else 0.0
        out = -(pv + lg + self.const - self.data.n * ls)
        return out if np.isfinite(out) else math.inf

    def value_and_grad(self, theta, h):
        beta, ls = self.split(np.asarray(theta, dtype=float))
        if not np.isfinite(ls) or abs(ls) > 700:
            return math.inf, np.zeros_like(theta)
        sigma = math.exp(ls)
        X, n = self.data.X, self.data.n
        e = (self.data.y - X @ beta) / sigma
        val, der = _smoothed_log_g(self.model, e, h)
        pv, pg_beta, pg_ls = self.prior._log_and_grad(beta, ls)
        f = pv + float(np.sum(val)) + self.const - n * ls
        g_beta = -(X.T @ der) / sigma + pg_beta
        if self.fixed_sigma is None:
            g_ls = -float(der @ e) - n + pg_ls
            grad = np.append(g_beta, g_ls)
        else:
            grad = g_beta
        if not np.isfinite(f):
            return math.inf, np.zeros_like(theta)
        return -f, -grad


def _local_ascent(obj: _Objective, theta0: np.ndarray) -> np.ndarray:
    schedule = _SMOOTHING_SCHEDULE if obj.model.is_lptn else (0.0,)
    theta = theta0
    for h in schedule:
        with np.errstate(all="ignore"):
            res = minimize(obj.value_and_grad, theta, args=(h,), jac=True, method="BFGS",
                           options={"gtol": 1e-10, "maxiter": 20 * theta.size + 2000})
        if np.all(np.isfinite(res.x)) and obj.value(res.x) <= obj.value(theta):
            theta = res.x
        elif np.all(np.isfinite(res.x)) and h > 0.0:
            theta = res.x  # smoothed problems are allowed to move uphill in the exact one
    return theta


@dataclass
class MAPOptions:
    """Settings for :func:`fit_map`.

    ``simplex_step`` is the edge length of the polishing simplex,
    ``restarts`` the number of simplex restarts from the best point.
    """

    ftol: float = 1e-10
    xtol: float = 1e-8
    restarts: int = 3
    simplex_step: float = 1e-3
    max_eval: int | None = None
    seed: int = 0
    starts: Sequence[tuple[str, np.ndarray, float]] | None = None


def default_starts(data: Dataset) -> list[tuple[str, np.ndarray, float]]:
    """``(tag, beta, sigma)`` from OLS, Huber IRLS and Tukey IRLS fits."""
    ols = fit_ols(data)
    rss = float(np.sum((data.y - ols.fitted) ** 2))
    out = [("ols", ols.beta_hat, math.sqrt(rss / data.n) if rss > 0 else 1.0)]
    for tag, model in (("huber", ErrorModel.huber()), ("tukey", ErrorModel.tukey())):
        try:
            fit = fit_m_irls(data, model)
        except ConvergenceError:
            continue
        out.append((tag, fit.beta_hat, fit.sigma_hat))
    return out


def fit_map(data: Dataset, model: ErrorModel, prior: PriorSpec = FLAT,
            opts: MAPOptions | None = None) -> FitResult:
    """Maximize the (generalized) log posterior over ``(beta, log sigma)``.

    Each start (OLS, Huber IRLS, Tukey IRLS by default) is first driven to a
    local maximum by BFGS -- for LPTN families through a sequence of
    kink-smoothed objectives shrinking to the exact one -- and then polished
    by a simplex search with restarts on the exact objective. The best local
    maximum wins.

    With a flat prior and an improper family the objective is unbounded in
    ``sigma``; sigma is then held at the MAD scale of the family's own IRLS
    fit and a warning is issued.
    """
    opts = opts or MAPOptions()
    starts = list(opts.starts) if opts.starts is not None else default_starts(data)
    fixed_sigma = None
    notes = []
    if prior.is_flat and not model.proper:
        irls = fit_m_irls(data, model)
        fixed_sigma = irls.sigma_hat
        msg = (f"flat prior with improper model {model.label()}: sigma held at "
               f"MAD scale {fixed_sigma:.6g}")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        starts.append(("irls", irls.beta_hat, fixed_sigma))
    obj = _Objective(data, model, prior, fixed_sigma)
    rng = np.random.default_rng(opts.seed)

    record = []
    best = None
    total_eval = 0
    for tag, b0, s0 in starts:
        theta0 = np.asarray(b0, dtype=float) if fixed_sigma is not None else np.append(b0, math.log(s0))
        if not np.isfinite(obj.value(theta0)):
            record.append((f"{tag}:skipped-nonfinite", math.nan))
            continue
        theta = _local_ascent(obj, theta0)
        step = opts.simplex_step * np.maximum(1.0, np.abs(theta))
        res = nelder_mead(obj.value, theta, step, ftol=opts.ftol, xtol=opts.xtol,
                          max_eval=opts.max_eval, restarts=opts.restarts, rng=rng)
        total_eval += res.n_eval
        record.append((tag, -res.fun))
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun - 1e-12:
            best = res
    if best is None:
        raise ConvergenceError("objective is non-finite at every start")
    beta, ls = obj.split(best.x)
    sigma = math.exp(ls)
    objective = log_posterior(data, model, prior, beta, sigma)
    method = "map" if fixed_sigma is None else "map-fixed-sigma"
    return _make_result(data, model, beta, sigma, objective, method, best.converged,
                        total_eval, record, notes)


def profile_hyperparam(data: Dataset, family, grid: Sequence[float],
                       prior: PriorSpec = FLAT, opts: MAPOptions | None = None):
    """Profile the normalized posterior over ``rho`` (LPTN) or ``nu`` (Student t).

    Returns ``(best_value, table)`` where ``table`` lists
    ``(value, objective, fit)``; ties go to the smaller value.
    """
    from .models import parse_family

    fam = parse_family(family)
    if fam not in (Family.LPTN, Family.STUDENT_T):
        raise ValueError("profiling is defined for the lptn (rho) and student_t (nu) families")
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty grid")
    make = ErrorModel.lptn if fam is Family.LPTN else ErrorModel.student_t
    models = [make(g) for g in grid]  # validates the range up front
    opts = opts or MAPOptions()
    if opts.starts is None:
        opts = replace(opts, starts=default_starts(data))
    table = []
    for g, model in zip(grid, models):
        fit = fit_map(data, model, prior, opts)
        table.append((g, fit.objective, fit))
    best = table[0]
    for row in table[1:]:
        if row[1] > best[1]:
            best = row
    return best[0], table


def coef_distance(a: FitResult | np.ndarray, b: FitResult | np.ndarray) -> float:
    """Sum of absolute coefficient differences."""
    ba = a.beta_hat if isinstance(a, FitResult) else np.asarray(a, dtype=float)
    bb = b.beta_hat if isinstance(b, FitResult) else np.asarray(b, dtype=float)
    return float(np.sum(np.abs(ba - bb)))


def fit_model(data: Dataset, model: ErrorModel, prior: PriorSpec = FLAT,
              method: str = "auto", map_opts: MAPOptions | None = None) -> FitResult:
    """Dispatch helper: OLS for normal, IRLS for M-estimators, MAP for Bayesian models."""
    if method == "auto":
        if model.family is Family.NORMAL:
            method = "ols"
        elif model.family in (Family.HUBER, Family.TUKEY):
            method = "irls"
        else:
            method = "map"
    if method == "ols":
        return fit_ols(data)
    if method == "irls":
        return fit_m_irls(data, model)
    if method == "map":
        return fit_map(data, model, prior, map_opts)
    raise ValueError(f"unknown method {method!r}")


__all__ = [
    "CategoricalTerm", "ConvergenceError", "DataError", "Dataset", "DegenerateScaleError",
    "DesignSpec", "FLAT", "FitResult", "IRLSOptions", "ImproperModelError", "MAPOptions",
    "PriorSpec", "RankDeficientError", "build_design", "coef_distance", "default_starts",
    "estimating_equation_residual", "fit_m_irls", "fit_map", "fit_model", "fit_ols",
    "log_likelihood", "log_posterior", "mad_scale", "profile_hyperparam",
]

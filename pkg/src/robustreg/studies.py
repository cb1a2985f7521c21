"""The two bundled analyses: shock data and the paid-loss triangle."""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np

from .datasets import fixture_path, load_shock, load_taylor, verify_fixture
from .estimation import (
    FLAT, FitResult, MAPOptions, coef_distance, default_starts, fit_m_irls, fit_map,
    fit_ols, profile_hyperparam,
)
from .models import ErrorModel
from .report import Report, Series
from .robustness import compare_with_without

RHO_GRID = tuple(round(0.70 + 0.01 * i, 2) for i in range(29))
TAYLOR_RHO = 0.88
SHOCK_RHO = 0.9


def ols_standard_errors(data, fit: FitResult) -> np.ndarray:
    """Classical OLS standard errors ``sigma_hat * sqrt(diag((X'X)^-1))``."""
    _, R = np.linalg.qr(data.X, mode="reduced")
    Rinv = np.linalg.inv(R)
    return fit.sigma_hat * np.sqrt(np.sum(Rinv * Rinv, axis=1))


def _fit_table(labels, fits: dict[str, FitResult]) -> Series:
    rows = [(lab,) + tuple(float(f.beta_hat[j]) for f in fits.values())
            for j, lab in enumerate(labels)]
    rows.append(("sigma",) + tuple(f.sigma_hat for f in fits.values()))
    return Series(("coefficient",) + tuple(fits), rows)


def reproduce_shock(seed: int = 0) -> Report:
    """OLS, Tukey biweight and LPTN fits of avoidance time on number of shocks."""
    digest = verify_fixture("shock.csv")
    data = load_shock(fixture_path("shock.csv"))
    ols = fit_ols(data)
    tukey = fit_m_irls(data, ErrorModel.tukey())
    lptn = fit_map(data, ErrorModel.lptn(SHOCK_RHO), FLAT, MAPOptions(seed=seed))
    fits = {"ols": ols, "tukey": tukey, "lptn": lptn}

    x = data.X[:, 1]
    group = [i for i in range(data.n) if tukey.weights[i] == 0.0]
    se = ols_standard_errors(data, ols)
    shift_se = np.abs(tukey.beta_hat - ols.beta_hat) / se

    grid = np.linspace(x.min(), x.max(), 61)
    lines = Series(("shocks", "ols", "tukey", "lptn"),
                   [(g,) + tuple(float(f.beta_hat[0] + f.beta_hat[1] * g) for f in fits.values())
                    for g in grid], kind="line", title="fitted lines")
    points = Series(("shocks", "time"), [(a, b) for a, b in zip(x, data.y)], title="data")
    weights = Series(("shocks", "w_ols", "w_tukey", "w_lptn"),
                     [(x[i], ols.weights[i], tukey.weights[i], lptn.weights[i])
                      for i in range(data.n)], title="weights")

    summary = {
        "study": "shock",
        "n": data.n,
        "p": data.p,
        "coefficients": {k: dict(zip(data.column_labels, map(float, f.beta_hat)))
                         for k, f in fits.items()},
        "sigma": {k: f.sigma_hat for k, f in fits.items()},
        "ols_weights_all_one": bool(np.all(ols.weights == 1.0)),
        "outlier_rows": [data.row_ids[i] for i in group],
        "outlier_shocks": [float(x[i]) for i in group],
        "tukey_outlier_weights": [float(tukey.weights[i]) for i in group],
        "lptn_outlier_weights": [float(lptn.weights[i]) for i in group],
        "ols_standard_errors": dict(zip(data.column_labels, map(float, se))),
        "tukey_minus_ols_in_ols_se": dict(zip(data.column_labels, map(float, shift_se))),
        "lptn_multistart": [list(r) for r in lptn.multistart_record],
    }
    return Report(
        fits=fits,
        series={"fig1a_points": points, "fig1a_lines": lines, "fig1b_weights": weights},
        tables={"coefficients": _fit_table(data.column_labels, fits)},
        summary=summary,
        inputs={"shock.csv": digest},
        config={"study": "shock", "tukey_k": 4.685, "lptn_rho": SHOCK_RHO, "prior": "flat"},
        seed=seed,
    )


def reproduce_taylor(grid: Sequence[float] = RHO_GRID, seed: int = 0,
                     rho: float = TAYLOR_RHO) -> Report:
    """OLS, Tukey biweight and LPTN fits of log incremental payments.

    The LPTN comparison is made at ``rho`` (fixed) and at the profiled value
    over ``grid``. The two largest absolute Tukey standardized residuals are
    the outliers removed in the with/without comparison.
    """
    digest = verify_fixture("taylor_triangle.csv")
    data = load_taylor(fixture_path("taylor_triangle.csv"))
    labels = data.column_labels
    opts = MAPOptions(seed=seed, starts=default_starts(data))

    ols = fit_ols(data)
    tukey = fit_m_irls(data, ErrorModel.tukey())
    lptn = fit_map(data, ErrorModel.lptn(rho), FLAT, opts)
    rho_hat, table = profile_hyperparam(data, "lptn", grid, FLAT, opts)
    lptn_prof = next(f for g, _, f in table if g == rho_hat)
    fits = {"ols": ols, "tukey": tukey, "lptn": lptn, "lptn_profiled": lptn_prof}

    dy5 = labels.index("DY=5")
    per_coef = np.abs(tukey.beta_hat - lptn.beta_hat)
    k = tukey.model.k
    r = tukey.std_residuals
    flagged = [i for i in range(data.n) if abs(r[i]) > k]
    top2 = sorted(np.argsort(-np.abs(r), kind="stable")[:2].tolist())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d_tukey, dv_tukey = compare_with_without(data, top2, ErrorModel.tukey())
        d_lptn, dv_lptn = compare_with_without(data, top2, ErrorModel.lptn(rho), FLAT,
                                               map_opts=MAPOptions(seed=seed))

    def panel(fit, name):
        return Series(("fitted", "std_residual"),
                      [(a, b) for a, b in zip(fit.fitted, fit.std_residuals)],
                      title=f"standardized residuals: {name}")

    summary = {
        "study": "taylor",
        "n": data.n,
        "p": data.p,
        "rho_fixed": rho,
        "rho_profiled": rho_hat,
        "distance_tukey_lptn": coef_distance(tukey, lptn),
        "distance_tukey_ols": coef_distance(tukey, ols),
        "distance_tukey_lptn_profiled": coef_distance(tukey, lptn_prof),
        "exp_dy5": {"tukey": math.exp(tukey.beta_hat[dy5]), "lptn": math.exp(lptn.beta_hat[dy5]),
                    "ols": math.exp(ols.beta_hat[dy5]),
                    "lptn_profiled": math.exp(lptn_prof.beta_hat[dy5])},
        "delta_dy5": float(per_coef[dy5]),
        "largest_delta_coefficient": labels[int(np.argmax(per_coef))],
        "largest_delta": float(per_coef.max()),
        "per_coefficient_delta": dict(zip(labels, map(float, per_coef))),
        "tukey_k": k,
        "flagged_rows": [data.row_ids[i] for i in flagged],
        "flagged_count": len(flagged),
        "removed_rows": [data.row_ids[i] for i in top2],
        "removed_abs_std_residuals": [float(abs(r[i])) for i in top2],
        "with_without_delta": {"tukey": d_tukey, "lptn": d_lptn},
        "with_without_per_coefficient": {
            "tukey": dict(zip(labels, map(float, dv_tukey))),
            "lptn": dict(zip(labels, map(float, dv_lptn)))},
        "objective": {k2: f.objective for k2, f in fits.items()},
        "lptn_multistart": [list(x) for x in lptn.multistart_record],
    }
    profile = Series(("rho", "objective"), [(g, o) for g, o, _ in table], kind="line",
                     title="profile over rho")
    return Report(
        fits=fits,
        series={"fig2_ols": panel(ols, "ols"), "fig2_tukey": panel(tukey, "tukey"),
                "fig2_lptn": panel(lptn, "lptn"), "rho_profile": profile},
        tables={"coefficients": _fit_table(labels, fits),
                "profile": Series(("rho", "objective"), [(g, o) for g, o, _ in table])},
        summary=summary,
        inputs={"taylor_triangle.csv": digest},
        config={"study": "taylor", "tukey_k": 4.685, "lptn_rho": rho,
                "rho_grid": [float(g) for g in grid], "prior": "flat"},
        seed=seed,
    )


def reproduce(study: str, **kwargs) -> Report:
    if study == "shock":
        return reproduce_shock(**kwargs)
    if study == "taylor":
        return reproduce_taylor(**kwargs)
    raise ValueError(f"unknown study {study!r}; choose 'shock' or 'taylor'")

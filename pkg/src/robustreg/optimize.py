"""Derivative-free simplex minimization with restarts.

A plain Nelder-Mead implementation (reflection 1, expansion 2, contraction
1/2, shrink 1/2). After the first run converges, the search is restarted
from a fresh simplex around the best point with randomly signed steps; a
high-dimensional simplex frequently collapses before reaching a minimum and
the restarts are what recover from that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_eval: int
    converged: bool
    restarts: int


def _run(f, x0, step, ftol, xtol, budget):
    n = x0.size
    sim = np.empty((n + 1, n))
    sim[0] = x0
    for i in range(n):
        sim[i + 1] = x0
        sim[i + 1, i] += step[i]
    fv = np.array([f(s) for s in sim])
    n_eval = n + 1
    converged = False
    while n_eval < budget:
        order = np.argsort(fv, kind="stable")
        sim, fv = sim[order], fv[order]
        if fv[-1] - fv[0] <= ftol and np.max(np.abs(sim[1:] - sim[0])) <= xtol:
            converged = True
            break
        centroid = sim[:-1].mean(axis=0)
        xr = 2.0 * centroid - sim[-1]
        fr = f(xr)
        n_eval += 1
        if fr < fv[0]:
            xe = 3.0 * centroid - 2.0 * sim[-1]
            fe = f(xe)
            n_eval += 1
            if fe < fr:
                sim[-1], fv[-1] = xe, fe
            else:
                sim[-1], fv[-1] = xr, fr
        elif fr < fv[-2]:
            sim[-1], fv[-1] = xr, fr
        else:
            if fr < fv[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (sim[-1] - centroid)
                fc = f(xc)
                accept = fc < fv[-1]
            n_eval += 1
            if accept:
                sim[-1], fv[-1] = xc, fc
            else:
                sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
                fv[1:] = [f(s) for s in sim[1:]]
                n_eval += n
    best = int(np.argmin(fv))
    return sim[best].copy(), float(fv[best]), n_eval, converged


def nelder_mead(f, x0, step, *, ftol=1e-10, xtol=1e-8, max_eval=None,
                restarts=3, rng=None) -> SimplexResult:
    """Minimize ``f`` starting from ``x0``.

    Parameters
    ----------
    f : callable
        Objective; ``inf``/``nan`` values are treated as ``inf``.
    x0 : array_like
        Starting point.
    step : float or array_like
        Initial simplex edge lengths per coordinate.
    ftol, xtol : float
        Convergence when the spread of objective values over the simplex is
        at most ``ftol`` and every vertex is within ``xtol`` of the best one.
    max_eval : int, optional
        Evaluation budget per run (default ``2000 * dim``).
    restarts : int
        Number of restarts from the best point.
    rng : numpy.random.Generator, optional
        Source of the restart step signs; a fixed default seed otherwise.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,)).copy()
    step[step == 0.0] = 1e-4
    budget = 2000 * n if max_eval is None else int(max_eval)
    rng = np.random.default_rng(0) if rng is None else rng

    def safe(x):
        v = f(x)
        return v if np.isfinite(v) else np.inf

    x, fx, total, converged = _run(safe, x0, step, ftol, xtol, budget)
    for _ in range(restarts):
        signs = rng.choice([-1.0, 1.0], size=n)
        x2, f2, used, conv2 = _run(safe, x, step * signs, ftol, xtol, budget)
        total += used
        if f2 < fx:
            x, fx = x2, f2
        converged = conv2 if f2 <= fx else converged
    return SimplexResult(x=x, fun=fx, n_eval=total, converged=converged, restarts=restarts)

"""Derivative-free simplex minimization (Nelder-Mead)."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


@dataclass(frozen=True)
class OptimOptions:
    """Stopping rules and initial simplex size.

    ``max_iter`` and ``max_fun`` default to ``5000 * m`` and ``10000 * m``.
    """

    x_tol: float = 1e-8
    f_tol: float = 1e-10
    max_iter: int | None = None
    max_fun: int | None = None
    init_step: float = 0.05

    def __post_init__(self):
        if self.x_tol <= 0 or self.f_tol <= 0 or self.init_step <= 0:
            raise ValueError("tolerances and init_step must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.max_fun is not None and self.max_fun < 1:
            raise ValueError("max_fun must be >= 1")


class OptimResult(NamedTuple):
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool
    best_trace: list | None = None


def initial_simplex(x0, step):
    x0 = np.asarray(x0, dtype=float)
    sim = np.tile(x0, (x0.size + 1, 1))
    for j in range(x0.size):
        sim[j + 1, j] += step * max(abs(x0[j]), 1e-3)
    return sim


def nelder_mead(f, x0, opts=None, trace=False):
    """Minimize ``f`` from ``x0``.

    Converged means the simplex diameter (max inf-norm distance to the best
    vertex) is below ``x_tol`` and the objective spread is below ``f_tol``.
    Non-finite objective values met during the search count as ``+inf``.
    """
    opts = opts or OptimOptions()
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    max_iter = opts.max_iter or 5000 * n
    max_fun = opts.max_fun or 10000 * n
    nfev = 0

    def fun(x):
        nonlocal nfev
        nfev += 1
        val = float(f(x))
        return val if np.isfinite(val) else np.inf

    f0 = fun(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    sim = initial_simplex(x0, opts.init_step)
    fs = np.empty(n + 1)
    fs[0] = f0
    for i in range(1, n + 1):
        fs[i] = fun(sim[i])

    best_trace = [] if trace else None
    converged = False
    nit = 0
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if trace:
            best_trace.append(fs[0])
        diameter = np.max(np.abs(sim[1:] - sim[0]))
        spread = fs[-1] - fs[0]
        if diameter < opts.x_tol and spread < opts.f_tol:
            converged = True
            break
        if nit >= max_iter or nfev >= max_fun:
            break
        nit += 1

        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + REFLECT * (centroid - worst)
        fr = fun(xr)
        if fr < fs[0]:
            xe = centroid + EXPAND * (centroid - worst)
            fe = fun(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + CONTRACT * (xr - centroid)
            fc = fun(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + CONTRACT * (worst - centroid)
            fc = fun(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        for i in range(1, n + 1):
            sim[i] = sim[0] + SHRINK * (sim[i] - sim[0])
            fs[i] = fun(sim[i])

    return OptimResult(sim[0].copy(), float(fs[0]), nit, nfev, converged, best_trace)

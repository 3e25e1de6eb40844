"""Closed-loop evaluation of tuned controllers and Monte Carlo statistics."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .tf_algebra import closed_loop_poles, filter_seq, roots_stable, tf_feedback


@dataclass(frozen=True)
class RunRecord:
    run_index: int
    method: str
    rho_hat: np.ndarray
    stable: bool
    J_hat: float
    seed: int
    converged: bool = True
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)


@dataclass(frozen=True)
class MethodStats:
    method: str
    bias: float
    variance: float
    mse: float
    stable_fraction: float
    n_runs: int
    n_failed: int = 0
    J_hat: list = field(default_factory=list)


def closed_loop_cost(C, G, M, r):
    """Mean squared gap between ``T(C) r`` and the desired output ``M r``.

    The loop is simulated noise-free; the caller is responsible for checking
    stability beforehand.
    """
    T, _ = tf_feedback(G, C)
    r = np.asarray(r, dtype=float)
    e = filter_seq(T, r) - filter_seq(M, r)
    return float(np.mean(e * e))


def is_closed_loop_stable(C, G):
    return roots_stable(closed_loop_poles(G, C))


def stability_rate(controllers, G):
    """Fraction of controllers whose loop with ``G`` is internally stable."""
    if not controllers:
        raise ValueError("empty controller list")
    return sum(is_closed_loop_stable(C, G) for C in controllers) / len(controllers)


def mse_stats(estimates, rho_d):
    """Squared bias, variance and MSE of a set of parameter estimates.

    ``bias = |mean - rho_d|^2``, ``variance = mean |rho_i - mean|^2`` and
    ``mse = mean |rho_i - rho_d|^2``; the three satisfy bias + variance = mse.
    """
    E = np.atleast_2d(np.asarray(estimates, dtype=float))
    if E.shape[0] == 0:
        raise ValueError("no estimates")
    rho_d = np.asarray(rho_d, dtype=float)
    mean = E.mean(axis=0)
    bias = float(np.sum((mean - rho_d) ** 2))
    variance = float(np.mean(np.sum((E - mean) ** 2, axis=1)))
    mse = float(np.mean(np.sum((E - rho_d) ** 2, axis=1)))
    return bias, variance, mse


@dataclass(frozen=True)
class DistributionSummary:
    bin_edges: np.ndarray
    counts: np.ndarray
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    n_excluded: int = 0


def summarize_distribution(values, bins=20):
    """Histogram and five-number summary of ``log10(values)``.

    Non-positive values cannot be log-transformed; they are left out and
    counted in ``n_excluded``.
    """
    v = np.asarray(values, dtype=float).ravel()
    keep = v > 0
    logs = np.log10(v[keep])
    if logs.size == 0:
        raise ValueError("no positive values to summarize")
    lo, hi = logs.min(), logs.max()
    rng = (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)
    counts, edges = np.histogram(logs, bins=bins, range=rng)
    q = np.percentile(logs, [0, 25, 50, 75, 100])
    return DistributionSummary(edges, counts, *map(float, q), n_excluded=int(np.sum(~keep)))


def method_stats(records, rho_d):
    """Aggregate the run records of one method."""
    ok = [r for r in records if not r.failed]
    bias = variance = mse = float("nan")
    if ok:
        bias, variance, mse = mse_stats([r.rho_hat for r in ok], rho_d)
    stable = sum(r.stable for r in ok) / len(ok) if ok else float("nan")
    return MethodStats(
        method=records[0].method,
        bias=bias,
        variance=variance,
        mse=mse,
        stable_fraction=stable,
        n_runs=len(records),
        n_failed=len(records) - len(ok),
        J_hat=[r.J_hat for r in ok if r.stable],
    )


def fmt(x):
    return format(float(x), ".17g")


def write_stats_csv(stats, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "bias", "variance", "mse", "stable_fraction"])
        for s in stats:
            w.writerow([s.method, fmt(s.bias), fmt(s.variance), fmt(s.mse), fmt(s.stable_fraction)])


def write_jhat_csv(records, path):
    """One row per run; ``J_hat`` is blank for unstable or failed runs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "run_index", "J_hat"])
        for r in records:
            w.writerow([r.method, r.run_index, fmt(r.J_hat) if r.stable and not r.failed else ""])


def write_hist_csv(summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(summary.bin_edges[:-1], summary.bin_edges[1:], summary.counts):
            w.writerow([fmt(lo), fmt(hi), int(c)])


def read_stats_csv(path):
    with open(path, newline="") as fh:
        return {row["method"]: {k: float(v) for k, v in row.items() if k != "method"}
                for row in csv.DictReader(fh)}

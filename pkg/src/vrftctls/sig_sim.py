"""Excitation, noise and data-collection experiments (open and closed loop)."""

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .tf_algebra import (
    RationalTF,
    closed_loop_poles,
    filter_seq,
    roots_stable,
    tf_feedback,
    tf_simplify,
)

# Fibonacci LFSR feedback taps (1-based) giving maximum-length sequences.
LFSR_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 11, 10, 4),
    13: (13, 12, 11, 8),
    14: (14, 13, 12, 2),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 18, 17, 14),
    20: (20, 17),
}


class LoopMode(str, enum.Enum):
    OPEN = "open_loop"
    CLOSED = "closed_loop"


class UnstableLoopError(ValueError):
    """The data-collection loop (G, C0) is not internally stable."""


@dataclass(frozen=True)
class NoiseSpec:
    H: RationalTF
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if not self.H.is_proper:
            raise ValueError("noise model H must be proper")


@dataclass(frozen=True)
class ExperimentData:
    mode: LoopMode
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray = field(default_factory=lambda: np.empty(0))
    seed: int | None = None
    sigma2: float | None = None

    def __post_init__(self):
        n = len(self.u)
        if n < 1 or len(self.y) != n:
            raise ValueError("u and y must be non-empty and of equal length")
        if self.mode == LoopMode.CLOSED and len(self.r) != n:
            raise ValueError("closed-loop data needs r with the same length as u")

    @property
    def n(self):
        return len(self.u)


def lfsr_bits(n, order=10, seed=1):
    """Output bits of a maximum-length Fibonacci LFSR, clocked ``n`` times."""
    try:
        taps = LFSR_TAPS[order]
    except KeyError:
        raise ValueError(f"no tap table for LFSR order {order}") from None
    period = (1 << order) - 1
    state = int(seed) % period + 1
    bits = np.empty(n, dtype=np.int8)
    for i in range(n):
        bits[i] = state & 1
        fb = 0
        for t in taps:
            fb ^= (state >> (order - t)) & 1
        state = (state >> 1) | (fb << (order - 1))
    return bits


def prbs(n, seed, amplitude=1.0, order=10):
    """Pseudorandom binary sequence with levels ``+amplitude`` / ``-amplitude``.

    Bit 1 maps to ``-amplitude``, so one full period carries one excess
    negative symbol.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    bits = lfsr_bits(n, order, seed)
    return amplitude * (1.0 - 2.0 * bits)


def white_noise(n, sigma2, seed):
    """Gaussian white noise with variance ``sigma2``, deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if sigma2 == 0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    return np.sqrt(sigma2) * rng.standard_normal(n)


def simulate_open_loop(G, noise, u, seed):
    """y = G u + H v."""
    if not G.is_proper:
        raise ValueError("plant G must be proper")
    u = np.asarray(u, dtype=float).ravel()
    v = white_noise(len(u), noise.sigma2, seed)
    y = filter_seq(G, u) + filter_seq(noise.H, v)
    return ExperimentData(LoopMode.OPEN, u=u, y=y, seed=seed, sigma2=noise.sigma2)


def closed_loop_maps(G, C0, H):
    """Transfer functions from (r, v) to (y, u) for the loop (G, C0)."""
    T0, S0 = tf_feedback(G, C0)
    S0C0 = tf_simplify(S0 * C0)
    return {
        "T0": T0,
        "S0": S0,
        "S0C0": S0C0,
        "S0H": tf_simplify(S0 * H),
        "S0C0H": tf_simplify(S0C0 * H),
    }


def simulate_closed_loop(G, C0, noise, r, seed):
    """y = T0 r + S0 H v and u = S0 C0 r - S0 C0 H v, one noise realization."""
    if not roots_stable(closed_loop_poles(G, C0)):
        raise UnstableLoopError("the loop (G, C0) is unstable")
    r = np.asarray(r, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("reference must be non-empty")
    maps = closed_loop_maps(G, C0, noise.H)
    v = white_noise(len(r), noise.sigma2, seed)
    y = filter_seq(maps["T0"], r)
    u = filter_seq(maps["S0C0"], r)
    if noise.sigma2 > 0:
        y = y + filter_seq(maps["S0H"], v)
        u = u - filter_seq(maps["S0C0H"], v)
    return ExperimentData(LoopMode.CLOSED, u=u, y=y, r=r, seed=seed, sigma2=noise.sigma2)


def _fmt(x):
    return format(float(x), ".17g")


def save_experiment_csv(data, path):
    """Write ``t,r,u,y`` rows at full double precision; r is blank in open loop."""
    has_r = data.mode == LoopMode.CLOSED
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "r", "u", "y"])
        for t in range(data.n):
            w.writerow([t, _fmt(data.r[t]) if has_r else "", _fmt(data.u[t]), _fmt(data.y[t])])


def load_experiment_csv(path):
    r, u, y = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "r", "u", "y"]:
            raise ValueError(f"{path}: expected header t,r,u,y, got {reader.fieldnames}")
        for row in reader:
            r.append(row["r"])
            u.append(float(row["u"]))
            y.append(float(row["y"]))
    closed = all(x != "" for x in r) and len(r) > 0
    if closed:
        return ExperimentData(LoopMode.CLOSED, u=np.array(u), y=np.array(y),
                              r=np.array([float(x) for x in r]))
    return ExperimentData(LoopMode.OPEN, u=np.array(u), y=np.array(y))

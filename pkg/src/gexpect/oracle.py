"""Independent verification machinery: a worst-case-volatility binomial
tree for the band's expectations and a seeded path simulator for
quadratic-variation and K-monotonicity experiments.

The tree maximises, node by node, over the two band endpoints; for a
linear reward in the variance that is exact, not an approximation.  Path
innovations are +-1 from a fixed 64-bit shift-register generator so that
quadratic variation is exact per step and runs reproduce bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SpaceTimeGrid, VolatilityBand, g_eval

__all__ = [
    "LatticePath",
    "RNG_ALGORITHM",
    "tree_expectation",
    "simulate_path",
    "quadratic_variation",
    "mutual_variation",
    "tree_k_expectation",
    "gauss_hermite_expectation",
]

RNG_ALGORITHM = "splitmix64+xorshift64star-v1"

_MASK = (1 << 64) - 1
_POLICIES = ("const-low", "const-high", "random", "markov")


def _splitmix64(seed: int) -> int:
    z = (seed + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class _Xorshift64Star:
    """Deterministic 64-bit shift-register stream; seed state via splitmix."""

    def __init__(self, seed: int):
        state = _splitmix64(seed & _MASK)
        self._state = state if state else 0x9E3779B97F4A7C15

    def next_word(self) -> int:
        x = self._state
        x ^= (x >> 12)
        x ^= (x << 25) & _MASK
        x ^= (x >> 27)
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def next_bit(self) -> int:
        return self.next_word() >> 63


@dataclass(frozen=True)
class LatticePath:
    """Simulated path: positions b and realised variance density a.

    ``times`` and ``b`` have one entry per node (n + 1), ``a`` one entry
    per step (n), and ``qv`` accumulates the squared increments so it
    matches quadratic variation exactly.
    """

    times: np.ndarray
    b: np.ndarray
    a: np.ndarray
    qv: np.ndarray

    def __post_init__(self) -> None:
        if len(self.b) != len(self.times) or len(self.qv) != len(self.times):
            raise ValueError("times, b and qv must have equal length")
        if len(self.a) != len(self.times) - 1:
            raise ValueError("a must have one entry per step")
        if self.qv[0] != 0.0 or np.any(np.diff(self.qv) < 0.0):
            raise ValueError("qv must be nondecreasing from 0")
        for arr in (self.times, self.b, self.a, self.qv):
            arr.setflags(write=False)


def tree_expectation(band: VolatilityBand, phi, t: float, steps: int) -> float:
    """Worst-case expectation of phi at time t on a recombining lattice.

    Node spacing sigma_max * sqrt(dt); each backward step takes the larger
    of the two endpoint one-step expectations (move probability a * dt /
    (2 dx^2), stay otherwise).  ``phi`` may be any callable on arrays.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    dt = t / steps
    dx = band.sigma_max * math.sqrt(dt)
    xs = dx * np.arange(-steps, steps + 1)
    values = np.asarray(phi(xs), dtype=float)
    p_low = band.sigma_min_sq / (2.0 * band.sigma_max_sq)
    for i in range(steps - 1, -1, -1):
        mid = values[1:-1]
        avg = 0.5 * (values[2:] + values[:-2])
        high = mid + (avg - mid)  # move probability 1/2 each way at the top endpoint
        low = mid + 2.0 * p_low * (avg - mid)
        values = np.maximum(high, low)
    return float(values[0])


def simulate_path(
    band: VolatilityBand,
    policy: str,
    grid: SpaceTimeGrid,
    seed: int,
    field=None,
) -> LatticePath:
    """Admissible scenario with +-1 innovations and a variance control.

    Policies: ``const-low`` / ``const-high`` pin the control to a band
    endpoint, ``random`` flips it per step, ``markov`` plays the band
    endpoint that locally attains the worst case for the supplied
    backward solution (sign of its eta at the current node).
    """
    if policy not in _POLICIES:
        raise ValueError(f"policy must be one of {_POLICIES}, got {policy!r}")
    if policy == "markov" and field is None:
        raise ValueError("markov policy needs the backward solution")
    rng = _Xorshift64Star(seed)
    nt = grid.nt
    dt = grid.dt
    times = np.linspace(0.0, grid.horizon, nt + 1)
    b = np.empty(nt + 1)
    a = np.empty(nt)
    qv = np.empty(nt + 1)
    b[0] = 0.0
    qv[0] = 0.0
    for i in range(nt):
        if policy == "const-low":
            a_i = band.sigma_min_sq
        elif policy == "const-high":
            a_i = band.sigma_max_sq
        elif policy == "random":
            a_i = band.sigma_max_sq if rng.next_bit() else band.sigma_min_sq
        else:
            a_i = (
                band.sigma_max_sq
                if field.eta_forward(i, b[i]) >= 0.0
                else band.sigma_min_sq
            )
        step = math.sqrt(a_i * dt)
        sign = 1.0 if rng.next_bit() else -1.0
        a[i] = a_i
        b[i + 1] = b[i] + sign * step
        qv[i + 1] = qv[i] + step * step
    return LatticePath(times=times, b=b, a=a, qv=qv)


def quadratic_variation(path: LatticePath) -> np.ndarray:
    """Partial sums of squared increments (exact for +-1 innovations)."""
    increments = np.diff(path.b)
    out = np.empty(len(path.b))
    out[0] = 0.0
    np.cumsum(increments * increments, out=out[1:])
    return out


def mutual_variation(p1: LatticePath, p2: LatticePath) -> np.ndarray:
    """Polarisation: (qv(p1 + p2) - qv(p1 - p2)) / 4 on shared time grids."""
    if len(p1.times) != len(p2.times) or np.any(p1.times != p2.times):
        raise ValueError("paths live on different time grids")
    d1 = np.diff(p1.b)
    d2 = np.diff(p2.b)
    out = np.empty(len(p1.b))
    out[0] = 0.0
    np.cumsum(0.25 * ((d1 + d2) ** 2 - (d1 - d2) ** 2), out=out[1:])
    return out


def tree_k_expectation(band: VolatilityBand, sol) -> float:
    """Worst-case expectation of the terminal K of a backward solution.

    Dynamic program on the same time grid as the solution, with the
    per-step reward eta * a * dt - 2 G(eta) * dt read from the solution's
    eta at the nearest node.  The supremum over controls of the mean of a
    nonincreasing component is 0 in the limit; the tree value reports the
    discrete counterpart (never positive).
    """
    grid = sol.grid
    nt, dt = grid.nt, grid.dt
    dx_tree = band.sigma_max * math.sqrt(dt)
    p_low = band.sigma_min_sq / (2.0 * band.sigma_max_sq)
    values = np.zeros(2 * nt + 1)
    for i in range(nt - 1, -1, -1):
        xs = dx_tree * np.arange(-i, i + 1)
        cols = np.clip(np.rint((xs - grid.x_min) / grid.dx).astype(int), 0, grid.nx - 1)
        eta = sol.eta[nt - i, cols]
        two_g = 2.0 * g_eval(band, eta)
        mid = values[1:-1]
        avg = 0.5 * (values[2:] + values[:-2])
        cont_high = mid + (avg - mid)
        cont_low = mid + 2.0 * p_low * (avg - mid)
        reward_high = (eta * band.sigma_max_sq - two_g) * dt
        reward_low = (eta * band.sigma_min_sq - two_g) * dt
        values = np.maximum(reward_high + cont_high, reward_low + cont_low)
    return float(values[0])


def gauss_hermite_expectation(phi, variance: float, n: int = 80) -> float:
    """Classical Gaussian expectation of phi with the given variance."""
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    xs = math.sqrt(2.0 * variance) * nodes
    return float(np.sum(weights * np.asarray(phi(xs))) / math.sqrt(math.pi))

"""Backward lattice solver for Markovian BSDEs driven by the band's
nonlinear expectation.

For a terminal value Phi(B_t - B_s) and drivers g(t, y, z), f(t, y, z)
the value function obeys the fully nonlinear terminal-value problem

    -du/dt = g(t, u, du/dx) + 2 G(f(t, u, du/dx) + 0.5 * d2u/dx2)

discretised with the same explicit kernel as the forward heat solve
(bit-identical when g = f = 0).  The solution carries Y = u, Z = du/dx
and the variance density eta = f + 0.5 * d2u/dx2 whose band-worst
increments make up the nonincreasing component K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SpaceTimeGrid, VolatilityBand, g_eval
from .expr import ScalarFunction, TriFunction, parse_tri
from .gheat import FieldSolution, _march

__all__ = [
    "GeneratorPair",
    "BsdeSolution",
    "BlowUpError",
    "zero_generator",
    "solve_gbsde",
    "nonlinear_expectation",
    "k_increment",
    "k_along_path",
]


class BlowUpError(RuntimeError):
    """Solution escaped the growth envelope implied by the terminal data."""

    def __init__(self, layer: int, value: float, envelope: float):
        super().__init__(
            f"|Y| = {value:.6g} exceeded envelope {envelope:.6g} at time layer {layer}"
        )
        self.layer = layer


@dataclass(frozen=True)
class GeneratorPair:
    """Drivers g(t, y, z), f(t, y, z) with a declared Lipschitz bound in (y, z).

    Construction spot-checks the bound on sampled difference quotients; with
    ``h6`` set it also checks g(t, y, 0) = f(t, y, 0) = 0 on sampled points,
    the condition under which the expectation preserves constants.
    """

    g: TriFunction
    f: TriFunction
    lipschitz_L: float
    h6: bool = False
    check_samples: int = field(default=1000, compare=False)

    def __post_init__(self) -> None:
        if self.lipschitz_L < 0:
            raise ValueError(f"lipschitz_L must be >= 0, got {self.lipschitz_L}")
        if not self.check_samples:
            return
        tol = self.lipschitz_L * (1.0 + 1e-9) + 1e-12
        for name, fn in (("g", self.g), ("f", self.f)):
            worst = fn.max_difference_quotient(samples=self.check_samples)
            if worst > tol:
                raise ValueError(
                    f"driver {name} shows difference quotient {worst:.6g} "
                    f"above declared Lipschitz bound {self.lipschitz_L}"
                )
        if self.h6:
            rng = np.random.default_rng(4)
            t = rng.uniform(0.0, 1.0, 100)
            y = rng.uniform(-10.0, 10.0, 100)
            for name, fn in (("g", self.g), ("f", self.f)):
                vals = np.broadcast_to(np.asarray(fn(t, y, 0.0)), t.shape)
                if np.max(np.abs(vals)) > 1e-12:
                    raise ValueError(f"h6 declared but {name}(t, y, 0) != 0")


def zero_generator() -> GeneratorPair:
    return GeneratorPair(parse_tri("0"), parse_tri("0"), 0.0, h6=True, check_samples=0)


class BsdeSolution:
    """Backward field with Y = u, Z = du/dx, and the variance density eta.

    Layer 0 holds the terminal datum (time label ``times[0]``); layer k is
    k backward steps earlier.  ``eta[k] = f(times[k], u[k], z[k]) +
    0.5 * curvature[k]``.
    """

    def __init__(self, field_solution: FieldSolution, gen: GeneratorPair, band: VolatilityBand):
        self.field = field_solution
        self.gen = gen
        self.band = band
        self._eta: np.ndarray | None = None

    @property
    def grid(self) -> SpaceTimeGrid:
        return self.field.grid

    @property
    def eta(self) -> np.ndarray:
        if self._eta is None:
            f_vals = self.gen.f(self.field.times[:, None], self.field.u, self.field.z)
            eta = np.broadcast_to(f_vals, self.field.u.shape) + 0.5 * self.field.curvature
            eta = np.ascontiguousarray(eta)
            eta.setflags(write=False)
            self._eta = eta
        return self._eta

    def y_at(self, s: float, x: float = 0.0) -> float:
        return self.field.value_at(s, x)

    def eta_forward(self, step: int, x: float) -> float:
        """eta at forward time step * dt and the node nearest x."""
        k = self.grid.nt - step
        j = int(np.clip(round((x - self.grid.x_min) / self.grid.dx), 0, self.grid.nx - 1))
        return float(self.eta[k, j])


def solve_gbsde(
    band: VolatilityBand,
    gen: GeneratorPair,
    terminal: ScalarFunction,
    grid: SpaceTimeGrid,
    t0: float = 0.0,
    envelope_factor: float = 50.0,
    picard: bool = False,
) -> BsdeSolution:
    """Solve backward from the terminal datum over [t0, t0 + horizon].

    Time labels run from the terminal time down to t0; Y at time s is
    ``value_at(s)``.  ``picard`` re-evaluates the drivers once against the
    explicit predictor per step (the Lipschitz bound plus CFL already make
    the plain explicit step a contraction, so this is an accuracy knob,
    not a stability requirement).  Raises CflError for unstable grids and
    BlowUpError when |Y| escapes ``envelope_factor * (max|terminal| +
    horizon * sup |drivers at the origin| + 1)``.
    """
    grid.check_cfl(band)
    datum = np.asarray(terminal(grid.xs), dtype=float)
    times = t0 + grid.horizon - np.linspace(0.0, grid.horizon, grid.nt + 1)
    origin_scale = 0.0
    for fn in (gen.g, gen.f):
        vals = np.abs(np.asarray(fn(times, 0.0, 0.0)))
        origin_scale += float(np.max(vals))
    envelope = envelope_factor * (
        float(np.max(np.abs(datum))) + grid.horizon * origin_scale + 1.0
    )

    def check_layer(k: int, layer: np.ndarray) -> None:
        peak = float(np.max(np.abs(layer)))
        if peak > envelope:
            raise BlowUpError(k, peak, envelope)

    u = _march(band, grid, datum, gen.g, gen.f, times, check_layer, picard=picard)
    return BsdeSolution(FieldSolution(grid, u, times), gen, band)


def nonlinear_expectation(
    band: VolatilityBand,
    gen: GeneratorPair,
    terminal: ScalarFunction,
    s: float,
    t: float,
    grid: SpaceTimeGrid,
) -> float:
    """Y at time s, node x = 0, of the backward solve on [s, t].

    The sub-interval reuses the grid's spatial mesh and time resolution,
    so the answer does not depend on how much horizon the grid carries
    beyond t.
    """
    if not (0.0 <= s <= t <= grid.horizon + 1e-12):
        raise ValueError(
            f"need 0 <= s <= t <= horizon, got s={s}, t={t}, horizon={grid.horizon}"
        )
    if t == s:
        return float(terminal(0.0))
    nt_sub = max(1, round((t - s) / grid.dt))
    sub = SpaceTimeGrid(
        horizon=t - s, x_min=grid.x_min, x_max=grid.x_max, nx=grid.nx, nt=nt_sub
    )
    sol = solve_gbsde(band, gen, terminal, sub, t0=s)
    return sol.y_at(s, 0.0)


def k_increment(band: VolatilityBand, eta: float, a: float, dt: float) -> float:
    """One K step: eta * a * dt - 2 G(eta) * dt, never positive in the band."""
    if not (band.sigma_min_sq - 1e-12 <= a <= band.sigma_max_sq + 1e-12):
        raise ValueError(
            f"variance density {a} outside band [{band.sigma_min_sq}, {band.sigma_max_sq}]"
        )
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return float((eta * a - 2.0 * g_eval(band, eta)) * dt)


def k_along_path(sol: BsdeSolution, path) -> np.ndarray:
    """Cumulative K along the path, nearest-node eta lookup; starts at 0.

    Each step uses the variance density the path actually realised, so the
    series is nonincreasing up to rounding noise.
    """
    grid = sol.grid
    nt = grid.nt
    if len(path.times) != nt + 1 or abs(
        (path.times[-1] - path.times[0]) - grid.horizon
    ) > 1e-9:
        raise ValueError("path and field are on different time grids")
    steps = np.arange(nt)
    layers = nt - steps
    cols = np.clip(
        np.rint((path.b[:-1] - grid.x_min) / grid.dx).astype(int), 0, grid.nx - 1
    )
    eta = sol.eta[layers, cols]
    dk = (eta * path.a - 2.0 * g_eval(sol.band, eta)) * grid.dt
    out = np.empty(nt + 1)
    out[0] = 0.0
    np.cumsum(dk, out=out[1:])
    return out

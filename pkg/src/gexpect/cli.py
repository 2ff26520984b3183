"""Configuration-driven experiment runner.

One JSON config per run, one command per invocation::

    gexpect <command> --config experiment.json [--out DIR]

Commands: gexp, gbsde, convexity, jensen, replimit, oracle-check.  Each
run writes ``<out>/<command>.report.json`` (inputs echo, results,
tolerances, pass flag) and ``<out>/<command>.data.csv`` (one row per grid
point / eps / scan cell, floats with 17 significant digits).  Exit status
0 on success (verdicts are data, not failures), 1 on config errors, 2 on
numerical failures.  Unknown config keys are rejected: reproducibility
over convenience.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .core import CflError, SpaceTimeGrid, VolatilityBand, cfl_time_steps
from .expr import EvalDomainError, ParseError, ScalarFunction, parse_scalar, parse_tri
from .gbsde import BlowUpError, GeneratorPair, solve_gbsde
from .gheat import NonFiniteError, solve_g_heat
from .convexity import (
    check_g_convexity,
    jensen_experiment,
    representation_limit_check,
)
from .oracle import tree_expectation

__all__ = ["ConfigError", "ExperimentConfig", "run", "main"]

SCHEMA_VERSION = 1
COMMANDS = ("gexp", "gbsde", "convexity", "jensen", "replimit", "oracle-check")

_NUMERICAL_ERRORS = (CflError, BlowUpError, NonFiniteError, EvalDomainError)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config error at {field}: {message}")
        self.field = field


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _require(obj: dict, path: str, required: dict, optional: dict | None = None) -> None:
    optional = optional or {}
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected an object, got {type(obj).__name__}")
    for key, kind in required.items():
        if key not in obj:
            raise ConfigError(f"{path}.{key}", "missing required field")
        _check_type(obj[key], f"{path}.{key}", kind)
    for key in obj:
        if key not in required and key not in optional:
            raise ConfigError(f"{path}.{key}", "unknown field")
        if key in optional:
            _check_type(obj[key], f"{path}.{key}", optional[key])


def _check_type(value, path: str, kind) -> None:
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
    elif kind == "string":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
    elif kind == "number-list":
        if not isinstance(value, list) or not value or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
        ):
            raise ConfigError(path, f"expected a non-empty list of numbers, got {value!r}")
    elif kind == "string-list":
        if not isinstance(value, list) or not value or any(not isinstance(v, str) for v in value):
            raise ConfigError(path, f"expected a non-empty list of strings, got {value!r}")
    elif kind == "object":
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    else:  # pragma: no cover
        raise AssertionError(kind)


class ExperimentConfig:
    """Validated view of a raw config document for one command."""

    def __init__(self, command: str, raw: dict):
        self.command = command
        self.raw = raw
        needs_grid = command in ("gexp", "gbsde", "jensen", "oracle-check")
        needs_gen = command in ("gbsde", "convexity", "jensen", "replimit")
        required = {"schema_version": "int", "band": "object", "params": "object"}
        optional = {
            "seed": "int",
            "threads": "int",
            "out_dir": "string",
            "functions": "object",
            "grid": "object",
            "generator": "object",
        }
        if needs_grid:
            required["grid"] = "object"
            optional.pop("grid")
        if needs_gen:
            required["generator"] = "object"
            optional.pop("generator")
        if command != "oracle-check":
            required["functions"] = "object"
            optional.pop("functions")
        _require(raw, "config", required, optional)
        if raw["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(
                "config.schema_version",
                f"expected {SCHEMA_VERSION}, got {raw['schema_version']}",
            )
        self.seed = raw.get("seed", 0)
        self.threads = raw.get("threads", 1)
        if self.threads < 1:
            raise ConfigError("config.threads", f"must be >= 1, got {self.threads}")
        self.band = self._band(raw["band"])
        self.picard = False
        self.grid = self._grid(raw["grid"]) if needs_grid else None
        self.generator = self._generator(raw["generator"]) if needs_gen else None
        self.functions = self._functions(raw.get("functions", {}))
        self.params = raw["params"]

    def _band(self, obj: dict) -> VolatilityBand:
        _require(obj, "config.band", {"sigma_min_sq": "number", "sigma_max_sq": "number"})
        try:
            return VolatilityBand(obj["sigma_min_sq"], obj["sigma_max_sq"])
        except ValueError as exc:
            raise ConfigError("config.band", str(exc)) from exc

    def _grid(self, obj: dict) -> SpaceTimeGrid:
        _require(
            obj,
            "config.grid",
            {"horizon": "number", "nx": "int"},
            {"half_width": "number", "x_min": "number", "x_max": "number", "nt": "int", "theta": "number"},
        )
        if "half_width" in obj and ("x_min" in obj or "x_max" in obj):
            raise ConfigError("config.grid.half_width", "give either half_width or x_min/x_max")
        if "half_width" in obj:
            x_min, x_max = -obj["half_width"], obj["half_width"]
        elif "x_min" in obj or "x_max" in obj:
            if "x_min" not in obj or "x_max" not in obj:
                raise ConfigError("config.grid.x_min", "x_min and x_max go together")
            x_min, x_max = obj["x_min"], obj["x_max"]
        else:
            half = 6.0 * self.band.sigma_max * float(np.sqrt(obj["horizon"]))
            x_min, x_max = -half, half
        nx = obj["nx"]
        dx = (x_max - x_min) / (nx - 1)
        nt = obj.get("nt")
        if nt is None:
            nt = cfl_time_steps(self.band, obj["horizon"], dx, obj.get("theta", 0.45))
        try:
            grid = SpaceTimeGrid(horizon=obj["horizon"], x_min=x_min, x_max=x_max, nx=nx, nt=nt)
            grid.check_cfl(self.band)
        except ValueError as exc:
            raise ConfigError("config.grid", str(exc)) from exc
        return grid

    def _generator(self, obj: dict) -> GeneratorPair:
        _require(
            obj,
            "config.generator",
            {"g": "string", "f": "string", "lipschitz_L": "number"},
            {"h6": "bool", "picard": "bool"},
        )
        self.picard = obj.get("picard", False)
        g = self._parse(obj["g"], "config.generator.g", parse_tri)
        f = self._parse(obj["f"], "config.generator.f", parse_tri)
        try:
            return GeneratorPair(g, f, obj["lipschitz_L"], h6=obj.get("h6", False))
        except ValueError as exc:
            raise ConfigError("config.generator", str(exc)) from exc

    def _functions(self, obj: dict) -> dict[str, ScalarFunction]:
        allowed = {"h": "string", "phi": "string", "terminal": "string"}
        _require(obj, "config.functions", {}, allowed)
        return {
            name: self._parse(text, f"config.functions.{name}", parse_scalar)
            for name, text in obj.items()
        }

    @staticmethod
    def _parse(text: str, path: str, parser):
        try:
            return parser(text)
        except ParseError as exc:
            raise ConfigError(path, str(exc)) from exc

    def function(self, name: str) -> ScalarFunction:
        if name not in self.functions:
            raise ConfigError(f"config.functions.{name}", "missing required field")
        return self.functions[name]

    def param(self, name: str, kind: str):
        if name not in self.params:
            raise ConfigError(f"config.params.{name}", "missing required field")
        _check_type(self.params[name], f"config.params.{name}", kind)
        return self.params[name]

    def optional_param(self, name: str, kind: str, default):
        if name not in self.params:
            return default
        _check_type(self.params[name], f"config.params.{name}", kind)
        return self.params[name]


# ---------------------------------------------------------------------------
# Command bodies: return (report dict, csv header, csv rows)
# ---------------------------------------------------------------------------

def _run_gexp(cfg: ExperimentConfig):
    _require(cfg.params, "config.params", {"times": "number-list"})
    times = cfg.param("times", "number-list")
    phi = cfg.function("phi")
    field = solve_g_heat(cfg.band, phi, cfg.grid)
    values = {}
    rows = []
    for t in times:
        if not 0.0 <= t <= cfg.grid.horizon:
            raise ConfigError("config.params.times", f"time {t} outside [0, {cfg.grid.horizon}]")
        values[_fmt(t)] = field.value_at(t, 0.0)
        pos = field.layer_of(t)
        k = int(np.clip(round(pos), 0, cfg.grid.nt))
        for x, u in zip(cfg.grid.xs, field.u[k]):
            rows.append((t, x, u))
    report = {"values_at_zero": values}
    return report, ("t", "x", "u"), rows


def _run_gbsde(cfg: ExperimentConfig):
    _require(cfg.params, "config.params", {"times": "number-list"})
    times = cfg.param("times", "number-list")
    for t in times:
        if not 0.0 <= t <= cfg.grid.horizon:
            raise ConfigError("config.params.times", f"time {t} outside [0, {cfg.grid.horizon}]")
    terminal = cfg.function("terminal")
    sol = solve_gbsde(cfg.band, cfg.generator, terminal, cfg.grid, picard=cfg.picard)
    rows = []
    for t in times:
        pos = sol.field.layer_of(t)
        k = int(np.clip(round(pos), 0, cfg.grid.nt))
        for x, y, z, eta in zip(cfg.grid.xs, sol.field.u[k], sol.field.z[k], sol.eta[k]):
            rows.append((t, x, y, z, eta))
    report = {"y_at_start": sol.y_at(0.0, 0.0), "horizon": cfg.grid.horizon}
    return report, ("t", "x", "y", "z", "eta"), rows


def _run_convexity(cfg: ExperimentConfig):
    _require(
        cfg.params,
        "config.params",
        {"y_range": "number-list", "z_range": "number-list"},
        {"resolution": "int", "t": "number"},
    )
    y_range = cfg.param("y_range", "number-list")
    z_range = cfg.param("z_range", "number-list")
    if len(y_range) != 2 or len(z_range) != 2:
        raise ConfigError("config.params.y_range", "ranges are [lo, hi] pairs")
    resolution = cfg.optional_param("resolution", "int", 33)
    t = cfg.optional_param("t", "number", 0.0)
    report_obj = check_g_convexity(
        cfg.band,
        cfg.generator,
        cfg.function("h"),
        (y_range[0], y_range[1]),
        (z_range[0], z_range[1]),
        resolution=resolution,
        t=t,
        threads=cfg.threads,
    )
    rows = [(y, z, a, gap) for (y, z, a, gap) in _scan_cells(cfg, report_obj, t)]
    report = {
        "verdict": report_obj.verdict,
        "min_gap": report_obj.min_gap,
        "witness_count": len(report_obj.witnesses),
        "witnesses": [list(w) for w in report_obj.witnesses[:100]],
        "tolerance": 1e-9,
    }
    return report, ("y", "z", "argmin_A", "inf_gap"), rows


def _scan_cells(cfg: ExperimentConfig, report_obj, t: float):
    from .convexity import reduce_over_A

    (ylo, yhi, res), (zlo, zhi, _) = report_obj.scanned
    for yv in np.linspace(ylo, yhi, res):
        for zv in np.linspace(zlo, zhi, res):
            gap, arg = reduce_over_A(cfg.band, cfg.generator, cfg.function("h"), t, float(yv), float(zv))
            yield (float(yv), float(zv), arg, gap)


def _run_jensen(cfg: ExperimentConfig):
    _require(cfg.params, "config.params", {"horizons": "number-list"}, {"s": "number"})
    horizons = cfg.param("horizons", "number-list")
    s = cfg.optional_param("s", "number", 0.0)
    h = cfg.function("h")
    phi = cfg.function("phi")
    rows = []
    for tau in horizons:
        t = s + tau
        if t > cfg.grid.horizon + 1e-12:
            raise ConfigError("config.params.horizons", f"s + {tau} exceeds grid horizon")
        lhs, rhs, gap = jensen_experiment(cfg.band, cfg.generator, h, phi, s, t, cfg.grid)
        rows.append((tau, lhs, rhs, gap))
    report = {
        "gaps": {_fmt(r[0]): r[3] for r in rows},
        "min_gap": min(r[3] for r in rows),
        # jets at 0 actually used by the experiment (phi and the composition)
        "phi_jet": list(phi.eval2(0.0)),
        "h_phi_jet": list(h.compose(phi).eval2(0.0)),
    }
    return report, ("horizon", "lhs", "rhs", "gap"), rows


def _run_replimit(cfg: ExperimentConfig):
    _require(
        cfg.params,
        "config.params",
        {"eps_list": "number-list"},
        {"t": "number", "nx": "int"},
    )
    eps_list = cfg.param("eps_list", "number-list")
    t = cfg.optional_param("t", "number", 0.0)
    nx = cfg.optional_param("nx", "int", 201)
    result = representation_limit_check(
        cfg.band, cfg.generator, cfg.function("terminal"), t, eps_list, nx=nx
    )
    rows = [(eps, quotient, result["formula"], err) for eps, quotient, err in result["rows"]]
    report = {
        "formula": result["formula"],
        "order": result["order"],
        "decreasing": result["decreasing"],
        "final_ok": result["final_ok"],
        "passed": result["passed"],
        "tolerance": {"final_rel_error": 0.05},
    }
    return report, ("eps", "quotient", "formula", "abs_error"), rows


def _run_oracle_check(cfg: ExperimentConfig):
    _require(
        cfg.params,
        "config.params",
        {"functions": "string-list", "times": "number-list"},
        {"steps": "int", "tolerance": "number"},
    )
    texts = cfg.param("functions", "string-list")
    times = cfg.param("times", "number-list")
    for t in times:
        if not 0.0 <= t <= cfg.grid.horizon:
            raise ConfigError("config.params.times", f"time {t} outside [0, {cfg.grid.horizon}]")
    steps = cfg.optional_param("steps", "int", 2000)
    tolerance = cfg.optional_param("tolerance", "number", 5e-3)
    rows = []
    worst = 0.0
    for text in texts:
        phi = ExperimentConfig._parse(text, "config.params.functions", parse_scalar)
        field = solve_g_heat(cfg.band, phi, cfg.grid)
        for t in times:
            pde = field.value_at(t, 0.0)
            tree = tree_expectation(cfg.band, phi, t, steps)
            diff = abs(pde - tree)
            worst = max(worst, diff)
            rows.append((text, t, pde, tree, diff))
    report = {
        "max_abs_diff": worst,
        "tolerance": tolerance,
        "passed": worst <= tolerance,
        "steps": steps,
    }
    return report, ("function", "t", "pde", "tree", "abs_diff"), rows


_RUNNERS = {
    "gexp": _run_gexp,
    "gbsde": _run_gbsde,
    "convexity": _run_convexity,
    "jensen": _run_jensen,
    "replimit": _run_replimit,
    "oracle-check": _run_oracle_check,
}


def run(command: str, config_path: str | Path, out_dir: str | Path | None = None) -> int:
    """Execute one command; returns the process exit status."""
    if command not in COMMANDS:
        print(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return 1
    try:
        raw = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error at config: cannot read {config_path}: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = ExperimentConfig(command, raw)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    out = Path(out_dir) if out_dir is not None else Path(raw.get("out_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"{command}.report.json"
    data_path = out / f"{command}.data.csv"
    try:
        report, header, rows = _RUNNERS[command](cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        failure = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": raw,
            "status": "numerical-failure",
            "diagnostic": f"{type(exc).__name__}: {exc}",
        }
        report_path.write_text(json.dumps(failure, indent=2) + "\n")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    document = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": raw,
        "status": "ok",
        "results": report,
        "seed": cfg.seed,
    }
    report_path.write_text(json.dumps(document, indent=2) + "\n")
    with data_path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gexpect",
        description="Sublinear-expectation experiments under volatility uncertainty",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=None, help="output directory (default: config out_dir or ./out)")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())

"""YAML run configuration.

One file describes a full run: model, economics, grid, solver, simulation.
Parsing is strict — unknown keys anywhere are a ConfigError, so typos fail
loudly instead of silently falling back to defaults. schema_version pins the
layout; only version 1 exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError
from .grid import Grid4D, build_grid
from .model import Dynamics, Economics, LevyMeasure, MarketModel, validate_model
from .solver import SolverConfig

_MEASURE_KEYS = {
    "null": set(),
    "atoms": {"pairs"},
    "uniform": {"half_width", "total_mass"},
    "double_exponential": {"decay", "half_width", "total_mass"},
}

_MODEL_KEYS = {
    "generator",
    "kappa",
    "mu",
    "sigma",
    "jump_scale",
    "discount_rate",
    "price_kind",
    "jump_convention",
    "measure",
}
_ECONOMICS_KEYS = {
    "fixed_cost",
    "marginal_cost",
    "reserve_slope",
    "reserve_offset",
    "u_max",
    "reserve_capacity",
    "horizon",
    "terminal_offset",
}
_GRID_KEYS = {"price_cap", "time_step", "price_step", "reserve_step"}
_SOLVER_KEYS = {
    "tolerance",
    "max_iterations",
    "mode",
    "sweep",
    "xi",
    "truncation",
    "dense_controls",
}
_SIM_KEYS = {"n_paths", "dt", "seed", "antithetic", "start"}
_START_KEYS = {"s", "x", "y", "regime"}
_TOP_KEYS = {"schema_version", "model", "economics", "grid", "solver", "simulation"}


@dataclass(frozen=True)
class SimulationSettings:
    n_paths: int = 10000
    dt: float = 1e-3
    seed: int = 0
    antithetic: bool = False
    start: tuple = (0.0, 50.0, 5.0, 0)  # (s, x, y, regime)


@dataclass(frozen=True)
class RunConfig:
    model: MarketModel
    grid: Grid4D
    solver: SolverConfig
    simulation: SimulationSettings
    raw: dict  # parsed YAML, echoed into run manifests


def _require_mapping(obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _get(section: dict, key: str, where: str, default=_MEASURE_KEYS):
    if key in section:
        return section[key]
    if default is _MEASURE_KEYS:  # sentinel: required
        raise ConfigError(f"missing required key '{key}' in {where}")
    return default


def _floats(value, key, where):
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key} must be a list of numbers") from exc


def _build_measure(section) -> LevyMeasure:
    section = _require_mapping(section, "model.measure")
    family = _get(section, "family", "model.measure")
    if family not in _MEASURE_KEYS:
        raise ConfigError(
            f"model.measure.family must be one of {sorted(_MEASURE_KEYS)}, got {family!r}"
        )
    _check_keys(section, _MEASURE_KEYS[family] | {"family"}, "model.measure")
    if family == "null":
        return LevyMeasure.null()
    if family == "atoms":
        pairs = _get(section, "pairs", "model.measure")
        try:
            parsed = [(float(z), float(m)) for z, m in pairs]
        except (TypeError, ValueError) as exc:
            raise ConfigError("model.measure.pairs must be a list of [size, mass] pairs") from exc
        return LevyMeasure.atoms(parsed)
    if family == "uniform":
        return LevyMeasure.uniform(
            half_width=float(_get(section, "half_width", "model.measure", 1.0)),
            total_mass=float(_get(section, "total_mass", "model.measure", 1.0)),
        )
    return LevyMeasure.double_exponential(
        decay=float(_get(section, "decay", "model.measure")),
        half_width=float(_get(section, "half_width", "model.measure", 5.0)),
        total_mass=float(_get(section, "total_mass", "model.measure", 1.0)),
    )


def parse_config(data: dict) -> RunConfig:
    """Build a RunConfig from already-parsed YAML data."""
    data = _require_mapping(data, "configuration root")
    _check_keys(data, _TOP_KEYS, "configuration root")
    version = _get(data, "schema_version", "configuration root")
    if version != 1:
        raise ConfigError(f"unsupported schema_version {version!r}; this build reads version 1")

    msec = _require_mapping(_get(data, "model", "configuration root"), "model")
    _check_keys(msec, _MODEL_KEYS, "model")
    esec = _require_mapping(_get(data, "economics", "configuration root"), "economics")
    _check_keys(esec, _ECONOMICS_KEYS, "economics")
    gsec = _require_mapping(_get(data, "grid", "configuration root"), "grid")
    _check_keys(gsec, _GRID_KEYS, "grid")
    ssec = _require_mapping(data.get("solver", {}) or {}, "solver")
    _check_keys(ssec, _SOLVER_KEYS, "solver")
    simsec = _require_mapping(data.get("simulation", {}) or {}, "simulation")
    _check_keys(simsec, _SIM_KEYS, "simulation")

    try:
        generator = np.asarray(_get(msec, "generator", "model"), dtype=float)
    except ValueError as exc:
        raise ConfigError("model.generator must be a square matrix of rates") from exc
    dynamics = Dynamics(
        kappa=float(_get(msec, "kappa", "model")),
        mu=_floats(_get(msec, "mu", "model"), "mu", "model"),
        sigma=_floats(_get(msec, "sigma", "model"), "sigma", "model"),
        jump_scale=_floats(_get(msec, "jump_scale", "model"), "jump_scale", "model"),
        discount_rate=float(_get(msec, "discount_rate", "model")),
    )
    economics = Economics(
        fixed_cost=float(_get(esec, "fixed_cost", "economics")),
        marginal_cost=float(_get(esec, "marginal_cost", "economics")),
        reserve_slope=float(_get(esec, "reserve_slope", "economics")),
        reserve_offset=float(_get(esec, "reserve_offset", "economics")),
        u_max=float(_get(esec, "u_max", "economics")),
        reserve_capacity=float(_get(esec, "reserve_capacity", "economics")),
        horizon=float(_get(esec, "horizon", "economics")),
        terminal_offset=float(_get(esec, "terminal_offset", "economics")),
    )
    model = MarketModel(
        generator=generator,
        dynamics=dynamics,
        economics=economics,
        measure=_build_measure(_get(msec, "measure", "model", {"family": "null"})),
        price_kind=str(_get(msec, "price_kind", "model", "linear")),
        jump_convention=str(_get(msec, "jump_convention", "model", "proportional")),
    )
    report = validate_model(model)
    if not report.ok:
        raise ConfigError("invalid model: " + "; ".join(report.violations))

    try:
        grid = build_grid(
            horizon=economics.horizon,
            price_cap=float(_get(gsec, "price_cap", "grid")),
            reserve_capacity=economics.reserve_capacity,
            time_step=float(_get(gsec, "time_step", "grid")),
            price_step=float(_get(gsec, "price_step", "grid")),
            reserve_step=float(_get(gsec, "reserve_step", "grid")),
            n_regimes=model.n_regimes,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc

    solver = SolverConfig(
        tolerance=float(_get(ssec, "tolerance", "solver", 1e-6)),
        max_iterations=int(_get(ssec, "max_iterations", "solver", 20000)),
        mode=str(_get(ssec, "mode", "solver", "upwind")),
        sweep=str(_get(ssec, "sweep", "solver", "jacobi")),
        xi=float(_get(ssec, "xi", "solver", 0.01)),
        truncation=float(_get(ssec, "truncation", "solver", 5.0)),
        dense_controls=int(_get(ssec, "dense_controls", "solver", 0)),
    )

    start_sec = simsec.get("start")
    if start_sec is None:
        start = (0.0, 0.5 * float(_get(gsec, "price_cap", "grid")),
                 0.5 * economics.reserve_capacity, 0)
    else:
        start_sec = _require_mapping(start_sec, "simulation.start")
        _check_keys(start_sec, _START_KEYS, "simulation.start")
        start = (
            float(_get(start_sec, "s", "simulation.start", 0.0)),
            float(_get(start_sec, "x", "simulation.start")),
            float(_get(start_sec, "y", "simulation.start")),
            int(_get(start_sec, "regime", "simulation.start", 0)),
        )
    antithetic = simsec.get("antithetic", False)
    if not isinstance(antithetic, bool):
        raise ConfigError(f"simulation.antithetic must be true or false, got {antithetic!r}")
    simulation = SimulationSettings(
        n_paths=int(_get(simsec, "n_paths", "simulation", 10000)),
        dt=float(_get(simsec, "dt", "simulation", 1e-3)),
        seed=int(_get(simsec, "seed", "simulation", 0)),
        antithetic=antithetic,
        start=start,
    )
    if simulation.n_paths < 2:
        raise ConfigError(f"simulation.n_paths must be at least 2, got {simulation.n_paths}")
    if simulation.dt <= 0:
        raise ConfigError(f"simulation.dt must be positive, got {simulation.dt}")

    return RunConfig(model=model, grid=grid, solver=solver, simulation=simulation, raw=data)


def load_config(path) -> RunConfig:
    """Read and validate a YAML run configuration from disk."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return parse_config(data)

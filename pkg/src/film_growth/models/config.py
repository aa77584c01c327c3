"""
Parsing and canonical emission of run configurations.

parse_config collects every violation before raising, so a user fixing a
config file sees all problems at once.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from typing import Any

import yaml

from ..core.observables import PROBE_NAMES
from ..core.stabilizer import MIN_GRID
from ..utils.errors import ConfigError
from .schema import (
    COMMAND_PARAMS,
    COMMANDS,
    ExperimentConfig,
    ModelConfig,
    NoiseConfig,
    RunConfig,
    SimConfig,
    StabilizerConfig,
)

_TOP_KEYS = {"model", "sim", "experiment", "output_dir"}
_MODEL_KEYS = {"boundary", "length", "nu", "truncation", "drift_sign", "noise"}
_NOISE_KEYS = {"kind", "values", "c", "p", "bound"}
_SIM_KEYS = {
    "h",
    "T",
    "burn_in",
    "stride",
    "seed",
    "ensemble",
    "nonlinear",
    "padding",
    "stabilizer",
}
_STABILIZER_KEYS = {"n_star", "target_c", "grid"}
_EXPERIMENT_KEYS = {"command", "params"}
_NOISE_KINDS = ("white", "array", "power_law")


class _Collector:
    """Typed field readers that record violations instead of raising."""

    def __init__(self) -> None:
        self.violations: list[str] = []

    def block(self, data: Any, name: str, allowed: set[str]) -> Mapping[str, Any]:
        if data is None:
            return {}
        if not isinstance(data, Mapping):
            self.violations.append(f"{name} must be a mapping")
            return {}
        for key in sorted(set(data) - allowed):
            self.violations.append(f"{name}.{key} is not a known key")
        return data

    def number(self, data: Mapping[str, Any], key: str, name: str, default: float) -> float:
        value = data.get(key, default)
        # YAML 1.1 reads 1e-3 (no dot) as a string
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                self.violations.append(f"{name} must be a number (got {value!r})")
                return default
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.violations.append(f"{name} must be a number (got {value!r})")
            return default
        if not math.isfinite(value):
            self.violations.append(f"{name} must be finite (got {value!r})")
            return default
        return float(value)

    def integer(
        self, data: Mapping[str, Any], key: str, name: str, default: int | None
    ) -> int | None:
        value = data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.violations.append(f"{name} must be an integer (got {value!r})")
            return default
        return value

    def flag(self, data: Mapping[str, Any], key: str, name: str, default: bool) -> bool:
        value = data.get(key, default)
        if not isinstance(value, bool):
            self.violations.append(f"{name} must be true or false (got {value!r})")
            return default
        return value

    def require(self, condition: bool, message: str) -> None:
        if not condition:
            self.violations.append(message)


def _parse_noise(c: _Collector, data: Any, truncation: int) -> NoiseConfig:
    block = c.block(data, "model.noise", _NOISE_KEYS)
    defaults = NoiseConfig()
    kind = block.get("kind", defaults.kind)
    if kind not in _NOISE_KINDS:
        c.violations.append(f"model.noise.kind must be one of {list(_NOISE_KINDS)} (got {kind!r})")
        kind = defaults.kind
    values = block.get("values")
    if values is not None:
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        ):
            c.violations.append("model.noise.values must be a list of numbers")
            values = None
        else:
            values = [float(v) for v in values]
            c.require(all(v >= 0 for v in values), "model.noise.values must be >= 0")
    if kind == "array":
        c.require(values is not None, "model.noise.values is required for kind 'array'")
        if values is not None:
            c.require(
                len(values) == truncation,
                f"model.noise.values must have {truncation} entries (got {len(values)})",
            )
    amp = c.number(block, "c", "model.noise.c", defaults.c)
    power = c.number(block, "p", "model.noise.p", defaults.p)
    c.require(amp >= 0, f"model.noise.c must be >= 0 (got {amp})")
    c.require(power >= 0, f"model.noise.p must be >= 0 (got {power})")
    bound = block.get("bound")
    if bound is not None:
        bound = c.number(block, "bound", "model.noise.bound", 0.0)
        if values is not None and values:
            c.require(bound >= max(values), "model.noise.bound must be >= max(values)")
    return NoiseConfig(kind=kind, values=values, c=amp, p=power, bound=bound)


def _parse_model(c: _Collector, data: Any) -> ModelConfig:
    block = c.block(data, "model", _MODEL_KEYS)
    defaults = ModelConfig()
    boundary = block.get("boundary", defaults.boundary)
    if boundary not in ("periodic", "neumann"):
        c.violations.append(f"model.boundary must be 'periodic' or 'neumann' (got {boundary!r})")
        boundary = defaults.boundary
    length = c.number(block, "length", "model.length", defaults.length)
    c.require(length > 0, f"model.length must be > 0 (got {length})")
    nu = c.number(block, "nu", "model.nu", defaults.nu)
    truncation = c.integer(block, "truncation", "model.truncation", defaults.truncation)
    if truncation is None or truncation < 1:
        c.violations.append(f"model.truncation must be >= 1 (got {truncation})")
        truncation = defaults.truncation
    drift_sign = c.integer(block, "drift_sign", "model.drift_sign", defaults.drift_sign)
    c.require(drift_sign in (-1, 1), f"model.drift_sign must be -1 or 1 (got {drift_sign})")
    noise = _parse_noise(c, block.get("noise"), truncation)
    return ModelConfig(
        boundary=boundary,
        length=length,
        nu=nu,
        truncation=truncation,
        drift_sign=drift_sign if drift_sign in (-1, 1) else defaults.drift_sign,
        noise=noise,
    )


def _parse_stabilizer(c: _Collector, data: Any, model: ModelConfig) -> StabilizerConfig | None:
    if data is None:
        return None
    block = c.block(data, "sim.stabilizer", _STABILIZER_KEYS)
    d = StabilizerConfig()
    n_star = c.integer(block, "n_star", "sim.stabilizer.n_star", None)
    c.require(n_star is None or n_star >= 1, f"sim.stabilizer.n_star must be >= 1 (got {n_star})")
    target_c = None
    if block.get("target_c") is not None:
        target_c = c.number(block, "target_c", "sim.stabilizer.target_c", 1.0)
        c.require(target_c > 0, f"sim.stabilizer.target_c must be > 0 (got {target_c})")
    grid = c.integer(block, "grid", "sim.stabilizer.grid", d.grid)
    c.require(
        grid is not None and grid >= MIN_GRID,
        f"sim.stabilizer.grid must be >= {MIN_GRID} (got {grid})",
    )
    c.require(model.nu < 0, f"sim.stabilizer needs model.nu < 0 (got {model.nu})")
    c.require(
        model.boundary == "neumann",
        f"sim.stabilizer needs model.boundary 'neumann' (got {model.boundary!r})",
    )
    return StabilizerConfig(n_star=n_star, target_c=target_c, grid=grid or d.grid)


def _parse_sim(c: _Collector, data: Any, model: ModelConfig) -> SimConfig:
    block = c.block(data, "sim", _SIM_KEYS)
    d = SimConfig()
    h = c.number(block, "h", "sim.h", d.h)
    T = c.number(block, "T", "sim.T", d.T)
    burn_in = c.number(block, "burn_in", "sim.burn_in", d.burn_in)
    stride = c.integer(block, "stride", "sim.stride", d.stride)
    seed = c.integer(block, "seed", "sim.seed", d.seed)
    ensemble = c.integer(block, "ensemble", "sim.ensemble", d.ensemble)
    padding = c.integer(block, "padding", "sim.padding", d.padding)

    c.require(h > 0, f"sim.h must be > 0 (got {h})")
    c.require(T >= 0, f"sim.T must be >= 0 (got {T})")
    c.require(burn_in >= 0, f"sim.burn_in must be >= 0 (got {burn_in})")
    c.require(T >= burn_in, f"sim.T must be >= sim.burn_in (got T={T}, burn_in={burn_in})")
    c.require(stride is not None and stride >= 1, f"sim.stride must be >= 1 (got {stride})")
    c.require(seed is not None and seed >= 0, f"sim.seed must be >= 0 (got {seed})")
    c.require(ensemble is not None and ensemble >= 1, f"sim.ensemble must be >= 1 (got {ensemble})")
    return SimConfig(
        h=h,
        T=T,
        burn_in=burn_in,
        stride=stride if stride is not None else d.stride,
        seed=seed if seed is not None else d.seed,
        ensemble=ensemble if ensemble is not None else d.ensemble,
        nonlinear=c.flag(block, "nonlinear", "sim.nonlinear", d.nonlinear),
        padding=padding,
        stabilizer=_parse_stabilizer(c, block.get("stabilizer"), model),
    )


# experiment.params readers: (collector, value, field path) -> normalized value
_Rule = Callable[[_Collector, Any, str], Any]


def _integer_rule(minimum: int, optional: bool = False) -> _Rule:
    def check(c: _Collector, value: Any, name: str) -> Any:
        if value is None and optional:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            c.violations.append(f"{name} must be an integer (got {value!r})")
        elif value < minimum:
            c.violations.append(f"{name} must be >= {minimum} (got {value})")
        return value

    return check


def _number_rule(
    accept: Callable[[float], bool] | None = None, bounds: str = "", optional: bool = False
) -> _Rule:
    def check(c: _Collector, value: Any, name: str) -> Any:
        if value is None and optional:
            return None
        number = value
        if isinstance(value, str):
            try:
                number = float(value)
            except ValueError:
                pass
        if (
            isinstance(number, bool)
            or not isinstance(number, (int, float))
            or not math.isfinite(number)
        ):
            c.violations.append(f"{name} must be a finite number (got {value!r})")
            return value
        if accept is not None and not accept(float(number)):
            c.violations.append(f"{name} must be {bounds} (got {number})")
        return float(number)

    return check


def _list_rule(item: _Rule, distinct: bool = False) -> _Rule:
    def check(c: _Collector, value: Any, name: str) -> Any:
        if not isinstance(value, list) or not value:
            c.violations.append(f"{name} must be a non-empty list (got {value!r})")
            return value
        before = len(c.violations)
        items = [item(c, v, f"{name}[{i}]") for i, v in enumerate(value)]
        if distinct and len(c.violations) == before and len(set(items)) != len(items):
            c.violations.append(f"{name} must not repeat values")
        return items

    return check


def _flag_rule(c: _Collector, value: Any, name: str) -> Any:
    if not isinstance(value, bool):
        c.violations.append(f"{name} must be true or false (got {value!r})")
    return value


def _probe_rule(c: _Collector, value: Any, name: str) -> Any:
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(p, str) for p in value):
        c.violations.append(f"{name} must be a list of probe names (got {value!r})")
        return value
    for probe in value:
        c.require(probe in PROBE_NAMES, f"{name}: unknown probe {probe!r}")
    return value


_UNIT_TIME = _number_rule(lambda t: 0 < t <= 1, "in (0, 1]")
_TRUNCATIONS = _list_rule(_integer_rule(1), distinct=True)

PARAM_RULES: dict[str, dict[str, _Rule]] = {
    "simulate": {"probes": _probe_rule},
    "stationary-scan": {"n_list": _TRUNCATIONS, "stationary_start": _flag_rule},
    "verify-phi": {
        "target_c": _number_rule(lambda x: x > 0, "> 0", optional=True),
        "grid": _integer_rule(MIN_GRID),
        "samples": _integer_rule(1),
        "n_star": _integer_rule(1, optional=True),
    },
    "lemma61": {
        "t_grid": _list_rule(_UNIT_TIME, distinct=True),
        "samples": _integer_rule(2),
        "n_list": _TRUNCATIONS,
        "chunk": _integer_rule(1),
        "oversampling_subsample": _integer_rule(1),
        "k_weight_t": _list_rule(_UNIT_TIME),
    },
    "lemma62": {
        "k_values": _list_rule(_number_rule(lambda k: k > 0, "> 0")),
        "eps": _number_rule(lambda e: e > 0, "> 0"),
        "x_grid": _list_rule(_number_rule(lambda x: x >= 1, ">= 1")),
        "samples": _integer_rule(2),
        "correlation": _number_rule(lambda r: -1 <= r <= 1, "in [-1, 1]"),
    },
    "order-check": {
        "refinements": _list_rule(_integer_rule(1), distinct=True),
        "reference_factor": _integer_rule(2),
    },
    "refine-check": {"n_list": _TRUNCATIONS, "init_amplitude": _number_rule()},
}


def _parse_params(c: _Collector, command: str, data: Any) -> dict[str, Any]:
    block = c.block(data, "experiment.params", set(COMMAND_PARAMS[command]))
    params = dict(block)
    before = len(c.violations)
    for key, rule in PARAM_RULES[command].items():
        if key in block:
            params[key] = rule(c, block[key], f"experiment.params.{key}")
    if command == "order-check" and len(c.violations) == before:
        resolved = {**COMMAND_PARAMS[command], **params}
        c.require(
            resolved["reference_factor"] > max(resolved["refinements"]),
            "experiment.params.reference_factor must exceed every refinement",
        )
    return params


def _parse_experiment(c: _Collector, data: Any) -> ExperimentConfig:
    block = c.block(data, "experiment", _EXPERIMENT_KEYS)
    command = block.get("command", ExperimentConfig().command)
    if command not in COMMANDS:
        c.violations.append(f"experiment.command must be one of {list(COMMANDS)} (got {command!r})")
        return ExperimentConfig()
    return ExperimentConfig(command=command, params=_parse_params(c, command, block.get("params")))


def config_from_mapping(data: Mapping[str, Any] | None) -> RunConfig:
    """Validate a loaded YAML mapping; raises ConfigError listing every violation."""
    c = _Collector()
    top = c.block(data, "config", _TOP_KEYS)
    model = _parse_model(c, top.get("model"))
    sim = _parse_sim(c, top.get("sim"), model)
    experiment = _parse_experiment(c, top.get("experiment"))
    output_dir = top.get("output_dir", RunConfig().output_dir)
    if not isinstance(output_dir, str) or not output_dir:
        c.violations.append("output_dir must be a non-empty string")
        output_dir = RunConfig().output_dir
    if c.violations:
        raise ConfigError(
            f"{len(c.violations)} configuration violation(s)", violations=c.violations
        )
    return RunConfig(model=model, sim=sim, experiment=experiment, output_dir=output_dir)


def parse_config(text: str) -> RunConfig:
    """Parse a YAML document into a validated RunConfig with defaults filled in."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"Failed to parse configuration: {e}", line=line) from e
    return config_from_mapping(data)


def emit_config(config: RunConfig) -> str:
    """Canonical YAML: sorted keys, block style, shortest round-trip floats."""
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)

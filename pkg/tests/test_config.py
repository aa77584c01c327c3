import math

import pytest

from src.film_growth.models.config import config_from_mapping, emit_config, parse_config
from src.film_growth.models.schema import RunConfig
from src.film_growth.utils.errors import ConfigError
from src.film_growth.utils.logging_utils import deep_merge, load_config

CUSTOM = """
model:
  boundary: periodic
  length: 10.0
  nu: 0.5
  truncation: 4
  noise:
    kind: array
    values: [1.0, 0.5, 0.25, 0.125]
sim:
  h: 1e-3
  T: 2.5
  burn_in: 0.5
  stride: 5
  seed: 17
  ensemble: 3
experiment:
  command: lemma62
  params:
    k_values: [1.0]
    samples: 5000
output_dir: runs/custom
"""


def test_empty_document_gives_defaults():
    config = parse_config("")
    assert config.to_dict() == RunConfig().to_dict()
    assert config.model.boundary == "neumann"
    assert config.model.length == pytest.approx(2 * math.pi)
    assert config.sim.h == pytest.approx(1e-3)
    assert config.experiment.command == "simulate"


def test_custom_document_is_parsed():
    config = parse_config(CUSTOM)
    assert config.model.boundary == "periodic"
    assert config.model.noise.values == [1.0, 0.5, 0.25, 0.125]
    # YAML 1.1 reads 1e-3 as a string
    assert config.sim.h == pytest.approx(1e-3)
    assert config.sim.seed == 17
    params = config.experiment.resolved_params()
    assert params["k_values"] == [1.0]
    assert params["eps"] == pytest.approx(0.1)

    model = config.model_spec()
    assert model.basis.truncation == 4
    assert config.sim_params().burn_in == pytest.approx(0.5)


@pytest.mark.parametrize("text", ["", CUSTOM])
def test_emit_parse_round_trip(text):
    emitted = emit_config(parse_config(text))
    assert emit_config(parse_config(emitted)) == emitted


def test_nonpositive_step_names_the_field():
    with pytest.raises(ConfigError) as exc:
        parse_config("sim:\n  h: 0\n")
    assert any(v.startswith("sim.h") for v in exc.value.violations)


def test_every_violation_is_reported():
    text = """
model:
  boundary: dirichlet
  truncation: 0
  colour: blue
sim:
  h: -1
  stride: 0
  nonlinear: maybe
experiment:
  command: simulate
  params:
    bogus: 1
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    joined = "\n".join(exc.value.violations)
    expected = (
        "model.boundary",
        "model.truncation",
        "model.colour",
        "sim.h",
        "sim.stride",
        "sim.nonlinear",
        "experiment.params.bogus",
    )
    for field in expected:
        assert field in joined
    assert str(len(exc.value.violations)) in exc.value.message


def test_noise_array_length_must_match_truncation():
    with pytest.raises(ConfigError) as exc:
        config_from_mapping(
            {"model": {"truncation": 4, "noise": {"kind": "array", "values": [1.0, 1.0]}}}
        )
    assert any("4 entries" in v for v in exc.value.violations)


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("sim:\n  h: 0.1\n  T: [1, 2\n")
    assert exc.value.line is not None
    assert exc.value.to_dict()["line"] == exc.value.line


def test_unknown_command_is_rejected():
    with pytest.raises(ConfigError):
        config_from_mapping({"experiment": {"command": "launch"}})


def test_load_config_merges_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("sim:\n  h: 0.01\n  T: 2.0\n", encoding="utf-8")
    data = load_config(path, overrides={"sim": {"T": 4.0}})
    assert data == {"sim": {"h": 0.01, "T": 4.0}}
    assert deep_merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}}) == {"a": {"b": 1, "c": 3}}
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


@pytest.mark.parametrize(
    ("command", "params", "field"),
    [
        ("lemma62", {"x_grid": [0.5, 10.0]}, "experiment.params.x_grid[0]"),
        ("lemma62", {"k_values": [-1.0]}, "experiment.params.k_values[0]"),
        ("lemma62", {"samples": "many"}, "experiment.params.samples"),
        ("lemma62", {"correlation": 2.0}, "experiment.params.correlation"),
        ("lemma61", {"t_grid": [0.01, 1.5]}, "experiment.params.t_grid[1]"),
        ("lemma61", {"n_list": [32, 32]}, "experiment.params.n_list"),
        ("verify-phi", {"grid": 16}, "experiment.params.grid"),
        ("stationary-scan", {"n_list": []}, "experiment.params.n_list"),
        ("stationary-scan", {"stationary_start": "yes"}, "experiment.params.stationary_start"),
        ("simulate", {"probes": ["mass", "energy"]}, "experiment.params.probes"),
        ("order-check", {"refinements": [1, 2, 128]}, "experiment.params.reference_factor"),
    ],
)
def test_experiment_params_are_validated(command, params, field):
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"experiment": {"command": command, "params": params}})
    assert any(v.startswith(field) for v in exc.value.violations)


def test_experiment_param_violations_are_collected_together():
    params = {"x_grid": [0.5], "samples": "many", "eps": 0}
    with pytest.raises(ConfigError) as exc:
        config_from_mapping({"experiment": {"command": "lemma62", "params": params}})
    assert len(exc.value.violations) == 3


def test_stabilizer_block_builds_the_profile():
    text = """
model:
  nu: -0.5
  truncation: 8
  drift_sign: 1
sim:
  stabilizer:
    n_star: 1
"""
    config = parse_config(text)
    assert config.sim.stabilizer.n_star == 1
    params = config.sim_params()
    assert params.stabilizer.n_star == 1
    assert params.stabilizer.drift_sign == 1
    assert params.stabilizer.Phi.basis == params.model.basis

    emitted = emit_config(config)
    assert emit_config(parse_config(emitted)) == emitted
    assert parse_config(emitted).sim.stabilizer.n_star == 1
    assert parse_config("").sim.stabilizer is None


def test_stabilizer_block_needs_an_unstable_neumann_model():
    text = """
model:
  boundary: periodic
  nu: 1.0
sim:
  stabilizer:
    n_star: 0
    grid: 8
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    joined = "\n".join(exc.value.violations)
    for field in ("sim.stabilizer.n_star", "sim.stabilizer.grid", "model.nu", "model.boundary"):
        assert field in joined

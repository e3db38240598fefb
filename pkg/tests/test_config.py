"""Tests for YAML run configs."""

from pathlib import Path

import pytest

from chainverifier.chains import RandomWalk, XnesChain
from chainverifier.config import ConfigError, load_config, parse_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _minimal(**analysis):
    section = {"x_star": [0.0], "seed": 7}
    section.update(analysis)
    return {"model": {"kind": "random-walk", "n": 1}, "analysis": section}


def test_parse_minimal_config():
    """Defaults fill every optional analysis field."""
    config = parse_config(_minimal())
    assert isinstance(config.model.build(), RandomWalk)
    assert config.analysis.epsilon == 0.1
    assert config.analysis.resolved_epsilon_return == pytest.approx(0.01)
    assert config.analysis.budget.restarts == 64
    assert len(config.analysis.origins.resolve(1)) == 32


def test_scalar_vectors_are_wrapped():
    """x_star: 0.0 reads as [0.0]; scalar origins read as one-coordinate points."""
    config = parse_config(_minimal(x_star=0.0, origins={"points": [1.0, -2.0]}))
    assert config.analysis.x_star == [0.0]
    assert [o.tolist() for o in config.analysis.origins.resolve(1)] == [[1.0], [-2.0]]


def test_unknown_key_names_the_field():
    """Extra keys are rejected with their dotted path."""
    data = _minimal()
    data["model"]["colour"] = "blue"
    with pytest.raises(ConfigError, match="model.colour"):
        parse_config(data)


def test_missing_seed_names_the_field():
    """The analysis seed is required."""
    data = _minimal()
    del data["analysis"]["seed"]
    with pytest.raises(ConfigError, match="'analysis.seed'"):
        parse_config(data)


def test_xnes_needs_lambda_and_mu():
    """xnes without lambda fails validation."""
    with pytest.raises(ConfigError, match="lambda"):
        parse_config({"model": {"kind": "xnes", "n": 2, "mu": 1}})


def test_xnes_model_builds_from_alias():
    """The YAML key 'lambda' maps to the population size."""
    config = parse_config({"model": {"kind": "xnes", "n": 2, "lambda": 4, "mu": 2}})
    chain = config.model.build()
    assert isinstance(chain, XnesChain)
    assert chain.params.lam == 4
    assert chain.p == 4


def test_x_star_dimension_must_match_model():
    """x_star with the wrong length is reported."""
    data = _minimal(x_star=[0.0, 0.0])
    with pytest.raises(ConfigError, match="x_star"):
        parse_config(data)


def test_negative_epsilon_is_rejected():
    """epsilon must be positive."""
    with pytest.raises(ConfigError, match="analysis.epsilon"):
        parse_config(_minimal(epsilon=-1.0))


def test_require_missing_section():
    """Commands name the section they need."""
    config = parse_config(_minimal())
    with pytest.raises(ConfigError, match="Missing config section: rate"):
        config.require("rate")


def test_overrides():
    """--seed-override and --rank-tol replace the configured values."""
    config = parse_config(_minimal()).with_overrides(seed=99, rank_tol=1e-6)
    assert config.analysis.seed == 99
    assert config.analysis.rank_tol == 1e-6


def test_rank_tol_override_needs_analysis():
    """Without an analysis section there is nothing to override."""
    config = parse_config({"model": {"kind": "random-walk"}})
    with pytest.raises(ConfigError, match="rank-tol"):
        config.with_overrides(rank_tol=1e-6)


def test_non_mapping_document():
    """A YAML list is not a config."""
    with pytest.raises(ConfigError, match="mapping"):
        parse_config([1, 2])


def test_load_invalid_yaml(tmp_path):
    """Broken YAML is a ConfigError."""
    path = tmp_path / "bad.yaml"
    path.write_text("model: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(str(path))


def test_load_missing_file(tmp_path):
    """A missing file is a ConfigError."""
    with pytest.raises(ConfigError, match="Cannot read config"):
        load_config(str(tmp_path / "absent.yaml"))


@pytest.mark.parametrize("name", ["random_walk.yaml", "selection_walk.yaml", "xnes_sphere.yaml", "frozen.yaml"])
def test_shipped_configs_load(name):
    """Every config in configs/ validates and builds its model."""
    config = load_config(str(CONFIG_DIR / name))
    model = config.model.build()
    assert config.analysis is not None
    assert len(config.analysis.x_star) == model.n

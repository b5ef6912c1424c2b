"""Configuration tests."""
from __future__ import annotations

from pathlib import Path

import pytest
from pydantic import ValidationError

from src.config import Settings
from src.domain.exceptions import ConfigError
from src.domain.value_objects import Activation, FlipRateScope, Method
from src.infrastructure.config import ExperimentConfig, dump_config, load_config, parse_config


@pytest.mark.unit
class TestExperimentConfig:
    """Experiment config schema tests."""

    def test_defaults(self) -> None:
        """An empty file means every default."""
        config = parse_config(None)
        assert config == ExperimentConfig()
        assert config.method is Method.TAIDTM
        assert config.noise.flip_rate_scope is FlipRateScope.GROUP
        assert config.graph.final_activation is Activation.IDENTITY
        assert config.svd_rank == config.noise.num_groups

    def test_unknown_keys_rejected(self) -> None:
        """Typos are errors, not silently ignored."""
        with pytest.raises(ConfigError, match="data.nn"):
            parse_config({"data": {"nn": 10}})
        with pytest.raises(ConfigError):
            parse_config({"extras": {}})

    def test_non_mapping(self) -> None:
        """Top level must be a mapping."""
        with pytest.raises(ConfigError):
            parse_config([1, 2])

    def test_section_validators(self) -> None:
        """Pool constraints are checked."""
        with pytest.raises(ConfigError):
            parse_config({"noise": {"rho": 0.7, "rho_max": 0.5}})
        with pytest.raises(ConfigError):
            parse_config({"noise": {"num_annotators": 10, "num_groups": 3}})
        with pytest.raises(ConfigError):
            parse_config({"graph": {"final_activation": "softmax-rows"}})

    def test_cross_section_validators(self) -> None:
        """k and tau are checked against other sections."""
        with pytest.raises(ConfigError):
            parse_config({"noise": {"num_annotators": 6, "num_groups": 2}, "graph": {"k": 7}})
        with pytest.raises(ConfigError):
            parse_config({"data": {"num_classes": 4}, "distill": {"tau": 0.25}})

    def test_svd_rank_fallbacks(self) -> None:
        """Simulated crowds fall back to the group count, loaded ones to 10."""
        config = parse_config({"noise": {"num_annotators": 30, "num_groups": 3}})
        assert config.svd_rank == 3
        assert config.svd_rank_for(external=False) == 3
        assert config.svd_rank_for(external=True) == 10
        small = parse_config({"noise": {"num_annotators": 6, "num_groups": 2}, "graph": {"k": 3}})
        assert small.svd_rank_for(external=True) == 6
        pinned = config.with_overrides(**{"graph.svd_rank": 4})
        assert pinned.svd_rank_for(external=True) == pinned.svd_rank == 4

    def test_hash_is_stable(self) -> None:
        """Equal configs hash equally; any change moves the hash."""
        first, second = ExperimentConfig(), parse_config({})
        assert first.config_hash == second.config_hash
        assert len(first.config_hash) == 12
        assert first.with_overrides(seed=1).config_hash != first.config_hash

    def test_dotted_overrides(self) -> None:
        """Overrides address nested keys and are re-validated."""
        config = ExperimentConfig().with_overrides(**{"noise.num_groups": 4, "seed": None})
        assert config.noise.num_groups == 4
        assert config.seed == 0
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(**{"noise.groups": 4})
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(**{"noise.num_groups": 7})

    def test_yaml_round_trip(self, tmp_path: Path) -> None:
        """Dumped configs load back to the same hash."""
        config = ExperimentConfig().with_overrides(method="ds", seed=3)
        path = tmp_path / "config.yaml"
        dump_config(config, path)
        assert load_config(path).config_hash == config.config_hash

    def test_bad_yaml(self, tmp_path: Path) -> None:
        """Syntax errors surface as configuration errors."""
        path = tmp_path / "broken.yaml"
        path.write_text("data: [1, 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        """Unreadable paths are configuration errors."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")


@pytest.mark.unit
class TestSettings:
    """Process settings tests."""

    def test_env_prefix(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Values come from CROWDTT_ variables."""
        monkeypatch.setenv("CROWDTT_LOG_LEVEL", "debug")
        monkeypatch.setenv("CROWDTT_WORKERS", "3")
        settings = Settings()
        assert settings.log_level == "DEBUG"
        assert settings.workers == 3

    def test_invalid_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Unknown environments are rejected."""
        monkeypatch.setenv("CROWDTT_ENVIRONMENT", "moon")
        with pytest.raises(ValidationError):
            Settings()

    def test_invalid_log_level(self) -> None:
        """Unknown log levels are rejected."""
        with pytest.raises(ValidationError):
            Settings(log_level="LOUD")

"""
Tests for RunConfig loading, validation and overrides
"""

import json
import tempfile
from pathlib import Path

import pytest
import yaml

from inverse_cascade.config import CorrectorSection, LadderSection, RunConfig
from inverse_cascade.errors import ConfigError


class TestDefaults:
    """Test the built-in configuration."""

    def test_defaults(self):
        """The toy ladder on a 512 grid, writing to icb_out."""
        config = RunConfig()
        assert config.grid == 512
        assert config.mode == "field"
        assert config.out == "icb_out"
        assert config.ladder == LadderSection()
        assert config.corrector.grid == 32
        assert config.top_level == 1

    def test_manifest_reloads(self):
        """The printed manifest is itself a valid configuration."""
        config = RunConfig(seed=7)
        assert RunConfig.from_dict(yaml.safe_load(config.manifest())) == config

    def test_ladder_params(self):
        """The ladder section and mode become LadderParams."""
        params = RunConfig(mode="asymptotic").ladder_params()
        assert params.A == 2.0
        assert params.K == 1
        assert params.mode == "asymptotic"

    def test_rate_params(self):
        """Rates run on the certified asymptotic ladder."""
        params = RunConfig().rate_params()
        assert params.A == 1e5
        assert params.b == 131072.0
        assert params.K == 6
        assert params.mode == "asymptotic"

    def test_path_params_and_background(self):
        """The corrector section feeds the path norms and the background pair."""
        config = RunConfig()
        assert config.path_params().nodes_per_octave == 4
        background = config.background()
        assert background.amplitude == 0.2
        assert background.wavenumber == 1
        assert background.n0 == 1

    def test_invalid_path_params(self):
        """alpha must stay below 1/10."""
        config = RunConfig(corrector=CorrectorSection(alpha=0.2))
        with pytest.raises(ConfigError):
            config.path_params()

    @pytest.mark.parametrize("corrector", [{"n0": 2}, {"wavenumber": 3, "n0": 2}, {"n0": 0}])
    def test_background_off_lattice(self, corrector):
        """The background wavenumber must be a multiple of n0."""
        config = RunConfig.from_dict({"corrector": corrector})
        with pytest.raises(ConfigError, match="n0"):
            config.background()

    def test_background_on_lattice(self):
        """wavenumber 4 with n0 2 rescales to wavenumber 2."""
        background = RunConfig.from_dict({"corrector": {"wavenumber": 4, "n0": 2}}).background()
        assert background.decay_rate == 4.0


class TestFromDict:
    """Test validation of configuration mappings."""

    def test_empty(self):
        """None and {} give the defaults."""
        assert RunConfig.from_dict(None) == RunConfig()
        assert RunConfig.from_dict({}) == RunConfig()

    def test_sections(self):
        """Section keys override their defaults."""
        config = RunConfig.from_dict({"grid": 256, "ladder": {"b": 1.5}, "probes": {"plots": False}})
        assert config.grid == 256
        assert config.ladder.b == 1.5
        assert config.ladder.A == 2.0
        assert config.probes.plots is False

    def test_exponent_strings(self):
        """YAML reads 1e5 as a string; float fields accept it."""
        config = RunConfig.from_dict(yaml.safe_load("probes:\n  rate_A: 1e5\nladder:\n  delta0: 1e-3\n"))
        assert config.probes.rate_A == 1e5
        assert config.ladder.delta0 == 1e-3

    @pytest.mark.parametrize(
        "data",
        [
            {"gird": 256},
            {"ladder": {"Z": 1}},
            {"ladder": [1, 2]},
            {"ladder": {"A": "many"}},
            {"mode": "lattice"},
            {"grid": 100},
            {"grid": "512"},
            {"corrector": {"grid": 12}},
            {"levels": 3},
        ],
    )
    def test_invalid(self, data):
        """Unknown keys and bad values raise ConfigError."""
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data)


class TestLoad:
    """Test loading configuration files."""

    def test_load_yaml(self):
        """A .yml file is read with yaml.safe_load."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "cascade.yml"
            path.write_text("grid: 256\nseed: 3\nladder:\n  b: 1.5\n", encoding="utf-8")
            config = RunConfig.load(path)
            assert config.grid == 256
            assert config.seed == 3
            assert config.ladder.b == 1.5

    def test_load_json(self):
        """A .json file is read with json.load."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "cascade.json"
            path.write_text(json.dumps({"mode": "asymptotic", "corrector": {"n0": 2}}), encoding="utf-8")
            config = RunConfig.load(path)
            assert config.mode == "asymptotic"
            assert config.corrector.n0 == 2

    def test_empty_file(self):
        """An empty YAML file gives the defaults."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "empty.yaml"
            path.write_text("", encoding="utf-8")
            assert RunConfig.load(path) == RunConfig()

    @pytest.mark.parametrize(
        "name,content",
        [
            ("cascade.txt", "grid: 256\n"),
            ("cascade.yml", "grid: [256\n"),
            ("cascade.yml", "- 1\n- 2\n"),
            ("cascade.json", "{grid: 256}"),
        ],
    )
    def test_invalid_files(self, name, content):
        """Bad suffixes, parse errors and non-mappings raise ConfigError."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / name
            path.write_text(content, encoding="utf-8")
            with pytest.raises(ConfigError):
                RunConfig.load(path)

    def test_missing_file(self):
        """A missing file raises ConfigError."""
        with pytest.raises(ConfigError):
            RunConfig.load("/nonexistent/cascade.yml")


class TestOverrides:
    """Test CLI overrides and the content hash."""

    def test_none_is_ignored(self):
        """Overrides left at None keep the loaded values."""
        config = RunConfig(grid=256)
        assert config.with_overrides(grid=None, seed=None) is config

    def test_values_apply(self):
        """Given overrides replace fields."""
        config = RunConfig().with_overrides(grid=128, seed=5, out="elsewhere")
        assert (config.grid, config.seed, config.out) == (128, 5, "elsewhere")

    def test_levels_raise_K(self):
        """Asking for more levels than K extends the ladder."""
        config = RunConfig().with_overrides(levels=3)
        assert config.levels == 3
        assert config.ladder.K == 3
        assert config.top_level == 3

    def test_hash_ignores_out(self):
        """The output directory does not change the hash; the seed does."""
        base = RunConfig()
        assert base.content_hash() == base.with_overrides(out="other").content_hash()
        assert base.content_hash() != base.with_overrides(seed=1).content_hash()
        assert len(base.content_hash()) == 12

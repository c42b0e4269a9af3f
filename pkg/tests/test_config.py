import logging

import pytest

from cli.__main__ import build_parser, load_config
from config.config import read_key_values, validate_config, write_key_values
from config.schemas import ExperimentConfig, GenConfig, ModelConfig, SplitConfig, Variant
from utils.errors import ConfigError
from tests.fixtures.cli_fixtures import SMALL_RUN, small_config


@pytest.mark.config
class TestKeyValueFiles:
    """Plain-text key=value config files."""

    def test_written_file_reads_back_into_equal_config(self, small_config):
        """A written mapping parses into the config it describes."""
        cfg = ExperimentConfig.from_mapping(read_key_values(small_config))
        assert cfg.gen.n == SMALL_RUN["gen.n"]
        assert cfg.model.conv_dims == (6, 6)
        assert cfg.train.lr == pytest.approx(0.01)

    def test_comments_blank_lines_and_repeats(self, tmp_path):
        """Comments and blanks are skipped; a repeated key keeps its last value."""
        path = tmp_path / "c.cfg"
        path.write_text("# header\n\ngen.n = 10\ngen.n=20\n", encoding="utf-8")
        assert read_key_values(path) == {"gen.n": "20"}

    def test_malformed_files_rejected(self, tmp_path):
        """A line without '=' and an unknown key are config errors."""
        path = tmp_path / "bad.cfg"
        path.write_text("gen.n\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_key_values(path)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"gen.bogus": "1"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"gen.n": "many"})

    def test_write_is_byte_stable(self, tmp_path):
        """Equal mappings write identical bytes whatever the insertion order."""
        write_key_values(tmp_path / "a.cfg", {"b.x": 1, "a.y": (2, 3)})
        write_key_values(tmp_path / "b.cfg", {"a.y": (2, 3), "b.x": 1})
        assert (tmp_path / "a.cfg").read_bytes() == (tmp_path / "b.cfg").read_bytes()


@pytest.mark.config
class TestValidateConfig:
    """Checks run on every config before a command starts."""

    def test_invalid_section_raises(self):
        """A bad value in any section is a ConfigError."""
        with pytest.raises(ConfigError):
            validate_config(ExperimentConfig(split=SplitConfig(alpha=-1.0)))
        with pytest.raises(ConfigError):
            validate_config(ExperimentConfig(gen=GenConfig(t1=10, t2=5)))

    def test_non_config_rejected(self):
        """Objects without a validate method are refused."""
        with pytest.raises(ConfigError):
            validate_config({"gen.n": 10})

    def test_differing_seeds_warn(self, caplog):
        """Sections seeded differently log one warning naming the seeds."""
        cfg = ExperimentConfig(gen=GenConfig(seed=1), split=SplitConfig(seed=2))
        with caplog.at_level(logging.WARNING, logger="config.config"):
            validate_config(cfg)
        assert any("Seeds differ" in r.getMessage() and "split.seed=2" in r.getMessage() for r in caplog.records)

    def test_matching_seeds_are_quiet(self, caplog):
        """The shipped defaults share one seed and log nothing."""
        with caplog.at_level(logging.WARNING, logger="config.config"):
            validate_config(ExperimentConfig())
        assert not any("Seeds differ" in r.getMessage() for r in caplog.records)


@pytest.mark.config
class TestLoadConfig:
    """Config resolution for command-line runs."""

    def _write(self, tmp_path, **changes):
        mapping = dict(SMALL_RUN, **changes)
        path = tmp_path / "run.cfg"
        write_key_values(path, mapping)
        return path

    def test_loader_validates(self, tmp_path):
        """An invalid value in the file fails at load time."""
        path = self._write(tmp_path, **{"split.alpha": -2.0})
        args = build_parser().parse_args(["generate", "--config", str(path)])
        with pytest.raises(ConfigError):
            load_config(args)

    def test_loader_warns_on_differing_seeds(self, tmp_path, caplog):
        """A file seeding sections differently warns through the loader."""
        path = self._write(tmp_path, **{"model.seed": 9})
        args = build_parser().parse_args(["generate", "--config", str(path)])
        with caplog.at_level(logging.WARNING, logger="config.config"):
            cfg = load_config(args)
        assert cfg.run_seed == SMALL_RUN["gen.seed"]
        assert any("Seeds differ" in r.getMessage() for r in caplog.records)

    def test_seed_flag_unifies_sections(self, tmp_path, caplog):
        """--seed overrides every section, so nothing is reported."""
        path = self._write(tmp_path, **{"model.seed": 9})
        args = build_parser().parse_args(["generate", "--config", str(path), "--seed", "21"])
        with caplog.at_level(logging.WARNING, logger="config.config"):
            cfg = load_config(args)
        assert cfg.gen.seed == cfg.split.seed == cfg.model.seed == cfg.run_seed == 21
        assert not any("Seeds differ" in r.getMessage() for r in caplog.records)

    def test_flags_override_file(self, tmp_path):
        """Flags win over the file's values."""
        path = self._write(tmp_path)
        args = build_parser().parse_args(["train", "--config", str(path), "--variant", "seal", "--hop", "2"])
        cfg = load_config(args)
        assert cfg.model.variant is Variant.SEAL
        assert cfg.subgraph.hop == 2


@pytest.mark.config
class TestRunSeed:
    """The seed recorded alongside results."""

    def test_run_seed_is_dataset_seed(self):
        """run_seed follows gen.seed even when other sections differ."""
        cfg = ExperimentConfig(gen=GenConfig(seed=5), model=ModelConfig(seed=8))
        assert cfg.run_seed == 5
        assert cfg.with_seed(12).run_seed == 12

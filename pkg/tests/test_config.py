import pytest

from hdagan.config import (
    KEY_HELP,
    ConfigError,
    RunConfig,
    format_config,
    load_config,
    parse_config,
)


class TestParsing:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()

    def test_round_trip_lossless(self):
        cfg = RunConfig(seed=7, n_yt=3, lambda_cycle=2.5, classifier_freeze=False, strategy="full")
        again = parse_config(format_config(cfg))
        assert again == cfg

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# a comment\n\nseed = 9  # trailing\n")
        assert cfg.seed == 9

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("not_a_key = 1")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config("seed = banana")

    def test_bool_forms(self):
        assert parse_config("classifier_freeze = false").classifier_freeze is False
        assert parse_config("classifier_freeze = TRUE").classifier_freeze is True
        with pytest.raises(ConfigError):
            parse_config("classifier_freeze = maybe")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("seed 4")

    def test_every_key_documented(self):
        from dataclasses import fields

        assert {f.name for f in fields(RunConfig)} == set(KEY_HELP)


class TestValidation:
    def test_bad_strategy(self):
        with pytest.raises(ConfigError, match="strategy"):
            parse_config("strategy = pseudo")

    def test_budget_exceeds_train(self):
        with pytest.raises(ConfigError, match="n_yt"):
            parse_config("n_yt = 41")

    def test_per_class_must_cover_split(self):
        with pytest.raises(ConfigError, match="per_class"):
            parse_config("per_class = 10")

    def test_zero_iterations_allowed(self):
        assert parse_config("iterations = 0").iterations == 0

    def test_negative_iterations_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("iterations = -1")


class TestLoadConfig:
    def test_file_plus_overrides(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 5\nn_yt = 2\n")
        cfg = load_config(p, {"n_yt": "7"})
        assert cfg.seed == 5 and cfg.n_yt == 7

    def test_override_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            load_config(None, {"bogus": "1"})

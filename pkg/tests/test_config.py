import pytest

from metasysid.config import (
    ExperimentConfig,
    apply_full_budget,
    config_digest,
    default_config,
    parse_config,
    serialize_config,
)
from metasysid.errors import ConfigError
from metasysid import kvtext


SAMPLE = """
experiment = polynomial
method = meta_sysid
seeds = 0 1 2
[training]
epochs = 50          # desk scale
inner_steps = 25
[model]
d_c = 8
"""


class TestParsing:
    def test_basic_overrides(self):
        cfg = parse_config(SAMPLE)
        assert cfg.seeds == (0, 1, 2)
        assert cfg.training.epochs == 50
        assert cfg.training.inner_steps == 25
        assert cfg.model.d_c == 8
        assert cfg.training.batch_size == 256  # untouched default

    def test_round_trip_identity(self):
        cfg = parse_config(SAMPLE)
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg
        assert serialize_config(again) == text

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("experiment = polynomial\n[nonsense]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[training]\nepochz = 10\n")

    def test_bad_type_rejected(self):
        with pytest.raises(ConfigError, match="integer"):
            parse_config("[training]\nepochs = soon\n")

    def test_enum_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("experiment = cooking\n")

    def test_bounds_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[training]\ninner_alpha = -0.5\n")
        with pytest.raises(ConfigError):
            parse_config("[training]\ntau = 0\n")

    def test_method_experiment_compatibility(self):
        with pytest.raises(ConfigError, match="not available"):
            parse_config("experiment = interpolation\nmethod = no_adapt\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("[training]\nepochs = 1\nepochs = 2\n")


class TestDigest:
    def test_digest_stable(self):
        cfg = parse_config(SAMPLE)
        assert config_digest(cfg) == config_digest(parse_config(SAMPLE))

    def test_digest_sensitive(self):
        a = config_digest(parse_config(SAMPLE))
        b = config_digest(parse_config(SAMPLE.replace("d_c = 8", "d_c = 9")))
        assert a != b


class TestBudgets:
    def test_full_budget_polynomial(self):
        cfg = apply_full_budget(default_config("polynomial"))
        assert cfg.training.epochs == 4048

    def test_full_budget_spring(self):
        cfg = apply_full_budget(default_config("mass_spring"))
        assert cfg.training.epochs == 512

    def test_full_budget_drone(self):
        cfg = apply_full_budget(default_config("drone_mpc"))
        assert cfg.training.epochs == 512
        assert cfg.drone.n_traj == 500

    def test_defaults_validate(self):
        for exp in ("polynomial", "mass_spring", "drone_mpc", "budget_sweep", "interpolation"):
            default_config(exp)


class TestKVText:
    def test_comments_and_blanks(self):
        sections = kvtext.parse("# hi\n\na = 1\n[s]\nb = two words\n")
        assert sections[""]["a"] == "1"
        assert sections["s"]["b"] == "two words"

    def test_malformed_line(self):
        with pytest.raises(ConfigError):
            kvtext.parse("just some text\n")

    def test_serialize_sorted(self):
        text = kvtext.serialize({"": {"b": "2", "a": "1"}, "z": {"k": "v"}})
        assert text.index("a = 1") < text.index("b = 2") < text.index("[z]")

import math
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from seqsense.config import load_config, parse_distribution, parse_ini
from seqsense.distributions import AlphaStable, Gaussian, GaussianMixture, Sum
from seqsense.errors import ConfigurationError

CONFIG_DIR = ROOT / "configs"


def test_minimal_config_takes_defaults():
    config = parse_ini("[system]\nL = 2\n")
    assert config.system.L == 2
    assert config.system.M == 1
    assert config.node.test == "m2_random_walk"
    assert config.node.mu0 is None
    assert config.fc.noise == Gaussian(0.0, 5.0)
    assert config.sweep.c == pytest.approx([math.exp(-2.0), math.exp(-4.0), math.exp(-6.0)])
    assert config.output.csv == "curve.csv"


def test_shipped_configs_parse():
    paths = sorted(CONFIG_DIR.glob("*.ini"))
    assert paths
    for path in paths:
        config = load_config(path)
        assert config.system.L >= 1


def test_distribution_grammar():
    assert parse_distribution("gaussian(mean=0, variance=5)") == Gaussian(0.0, 5.0)
    assert parse_distribution("alpha_stable(alpha=1.8)") == AlphaStable(alpha=1.8)
    nested = parse_distribution("sum(parts=[gaussian(mean=0, variance=5), alpha_stable(alpha=1.8)])")
    assert nested == Sum(parts=(Gaussian(0.0, 5.0), AlphaStable(alpha=1.8)))
    mixture = parse_distribution("mixture(components=[(0.5, -1, 1), (0.5, 1, 1)])")
    assert mixture == GaussianMixture(components=((0.5, -1.0, 1.0), (0.5, 1.0, 1.0)))


def test_distribution_grammar_errors():
    with pytest.raises(ConfigurationError):
        parse_distribution("gaussian(mean=0")
    with pytest.raises(ConfigurationError):
        parse_distribution("cauchy(scale=1)")
    with pytest.raises(ConfigurationError):
        parse_distribution("3.0")


def test_unknown_key_is_reported_with_its_line():
    with pytest.raises(ConfigurationError, match="line 3"):
        parse_ini("[system]\nL = 2\ncolour = blue\n")


def test_bad_value_is_reported():
    with pytest.raises(ConfigurationError, match="system.L"):
        parse_ini("[system]\nL = 0\n")
    with pytest.raises(ConfigurationError):
        parse_ini("[system]\nL = 2\n[sweep]\nprerun = 500\n")
    with pytest.raises(ConfigurationError):
        parse_ini("[system]\nL = 2\n[sweep]\nc = 0.1, 1.5\n")
    with pytest.raises(ConfigurationError):
        parse_ini("[system]\nL = 2\n[node]\noutlier_under = h0\n")


def test_malformed_file():
    with pytest.raises(ConfigurationError):
        parse_ini("L = 2\n")


def test_node_overrides():
    config = parse_ini("[system]\nL = 3\n[node]\nK = 4\n[node.2]\nK = 7\nmu0 = 0.5\nmu1 = 1.5\n")
    assert config.node_settings(1).K == 4.0
    assert config.node_settings(2).K == 7.0
    assert config.node_settings(2).mu0 == 0.5
    assert config.node_settings(3).mu0 is None


def test_node_override_outside_range():
    with pytest.raises(ConfigurationError):
        parse_ini("[system]\nL = 2\n[node.3]\nK = 7\n")
    with pytest.raises(ConfigurationError):
        parse_ini("[system]\nL = 2\n[node.1]\nshape = 7\n")


def test_dotted_overrides():
    config = parse_ini("[system]\nL = 2\n", {"sweep.trials": "5", "node.2.K": "3", "fc.I": "0.5"})
    assert config.sweep.trials == 5
    assert config.node_settings(2).K == 3.0
    assert config.fc.I == 0.5
    with pytest.raises(ConfigurationError):
        parse_ini("[system]\nL = 2\n", {"trials": "5"})


def test_node_override_needs_an_integer_index():
    with pytest.raises(ConfigurationError, match="node.<index>"):
        parse_ini("[system]\nL = 2\n", {"node.x.K": "3"})
    with pytest.raises(ConfigurationError, match="node.<index>"):
        parse_ini("[system]\nL = 2\n[node.first]\nK = 3\n")


def test_canonical_text_round_trips():
    config = load_config(CONFIG_DIR / "emi_fading_distributed.ini", {"node.2.K": "3"})
    text = config.to_ini()
    again = parse_ini(text)
    assert again.to_ini() == text
    assert again.digest() == config.digest()
    assert "[node.2]" in text


def test_round_trip_without_node_overrides_is_equal():
    config = load_config(CONFIG_DIR / "gaussian_distributed.ini")
    assert parse_ini(config.to_ini()).model_dump() == config.model_dump()


def test_digest_ignores_formatting():
    a = parse_ini("[system]\nL = 2\n[node]\nK = 5\n")
    b = parse_ini("# comment\n[system]\nL=2\n\n[node]\nK = 5.0  # inline\n")
    c = parse_ini("[system]\nL = 3\n")
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 64


def test_missing_file():
    with pytest.raises(ConfigurationError):
        load_config(CONFIG_DIR / "missing.ini")

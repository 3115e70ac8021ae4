import pytest

from resilient_cs.config import ConfigError, parse_config


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.geometry.block == 16
    assert cfg.train.epochs == (100, 60, 60)
    assert cfg.train.channel.regime() == "fixed(0)"


def test_full_config(tmp_path):
    cfg = parse_config("""
[geometry]
block = 8
p2_layers = 3   # narrower
[channel]
model = burst
regime = uniform(0,0.1)
burst_mean_len = 4
[train]
subrate = 0.25
patch_side = 32
epochs = 5,2,2
[eval]
test_drops = 0,0.2
[paths]
test_images = imgs
""", base_dir=tmp_path)
    assert cfg.geometry.block == 8 and cfg.geometry.p2_layers == 3
    assert cfg.train.channel.regime() == "burst[4]:uniform(0,0.1)"
    assert cfg.train.epochs == (5, 2, 2)
    assert cfg.eval.test_drops == (0.0, 0.2)
    assert cfg.test_images == tmp_path / "imgs"


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as info:
        parse_config("""
[geometry]
block = x
colour = 3
[channel]
regime = fixed(0.9)
[train]
epochs = 1,2
[bogus]
a = 1
""")
    text = "\n".join(info.value.problems)
    for field in ("geometry.block", "geometry.colour", "channel", "train.epochs", "[bogus]"):
        assert field in text


def test_patch_side_must_tile():
    with pytest.raises(ConfigError, match="patch_side"):
        parse_config("[train]\npatch_side = 40\n")

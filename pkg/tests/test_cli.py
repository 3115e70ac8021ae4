import pytest

from resilient_cs.cli import main
from resilient_cs.imageio import synthetic_image, write_pgm

TINY = """
[geometry]
block = 8
p2_layers = 1
p2_channels = 2
p3_layers = 1
p3_channels = 2
[channel]
regime = fixed(0.1)
[train]
subrate = 0.25
patches = 8
patch_side = 16
batch_size = 4
epochs = 1,1,1
[paths]
train_images = imgs
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "imgs").mkdir()
    for s in range(2):
        write_pgm(synthetic_image(32, s), tmp_path / "imgs" / f"im{s}.pgm")
    (tmp_path / "tiny.ini").write_text(TINY)
    return tmp_path


def test_mask_stats_rate_zero(capsys):
    assert main(["mask-stats", "--rate", "0", "--n", "1000"]) == 0
    assert "realized rate    0.000000" in capsys.readouterr().out


def test_mask_stats_burst(capsys):
    assert main(["mask-stats", "--model", "burst", "--rate", "0.1", "--n", "100000", "--burst-len", "8"]) == 0
    out = capsys.readouterr().out
    run = float(out.split("mean loss run")[1].split()[0])
    assert 6 < run < 10


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["mask-stats", "--rate", "1.5"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_runtime_error_exits_1(tmp_path, capsys):
    assert main(["eval", "--ckpt", str(tmp_path / "missing.ckpt"), "--images", str(tmp_path),
                 "--out", str(tmp_path / "r.csv")]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_exits_1(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[train]\nepochs = 1\n")
    assert main(["train", "--config", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "x.ckpt")]) == 1
    assert "train.epochs" in capsys.readouterr().err


def test_train_eval_grid_are_reproducible(workdir):
    outs = []
    for run in ("a", "b"):
        d = workdir / run
        d.mkdir()
        assert main(["train", "--config", str(workdir / "tiny.ini"), "--out", str(d / "m.ckpt")]) == 0
        assert main(["eval", "--ckpt", str(d / "m.ckpt"), "--images", str(workdir / "imgs"),
                     "--test-drops", "0,0.2", "--trials", "2", "--out", str(d / "r.csv")]) == 0
        outs.append(((d / "m.ckpt").read_bytes(), (d / "r.csv").read_text()))
    assert outs[0] == outs[1]
    assert (workdir / "a" / "m.report.txt").exists()
    assert (workdir / "a" / "m.loss.csv").read_text().startswith("phase,epoch,loss")
    assert main(["grid", "--configs", str(workdir / "a"), "--images", str(workdir / "imgs"),
                 "--test-drops", "0", "--trials", "1", "--out", str(workdir / "g.csv")]) == 0
    assert len((workdir / "g.csv").read_text().splitlines()) == 4


def test_gradcheck_command(workdir, capsys):
    cfg = workdir / "gc.ini"
    cfg.write_text("[geometry]\nblock = 8\np2_layers = 2\np2_channels = 2\np3_layers = 2\np3_channels = 2\n"
                   "[train]\nsubrate = 0.25\npatch_side = 16\n")
    assert main(["gradcheck", "--config", str(cfg)]) == 0
    assert "PASS" in capsys.readouterr().out

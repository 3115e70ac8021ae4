import numpy as np
import pytest

from resilient_cs.channel import ChannelSpec
from resilient_cs.evalbench import CSV_HEADER, PSNR_CAP, ReportTable, TrainedModel, evaluate, psnr, run_grid
from resilient_cs.imageio import synthetic_image
from resilient_cs.model import Geometry, init_model

GEOM = Geometry(block=8, levels=2, p2_layers=1, p2_channels=2, p3_layers=1, p3_channels=2)


def test_psnr_examples():
    a = np.zeros((4, 4))
    assert psnr(a, a) == PSNR_CAP
    assert psnr(a, np.full((4, 4), 0.5)) == pytest.approx(6.0206, abs=1e-4)
    assert psnr(a, np.full((4, 4), 0.1)) == pytest.approx(20.0, abs=1e-12)


def test_psnr_symmetric_and_decreasing_with_noise():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(16, 16))
    n = rng.normal(size=(16, 16))
    assert psnr(x, x + 0.01 * n) == psnr(x + 0.01 * n, x)
    assert psnr(x, x + 0.01 * n) > psnr(x, x + 0.05 * n)


@pytest.fixture(scope="module")
def models():
    return init_model(GEOM, 0.25, 0)


@pytest.fixture(scope="module")
def images():
    return [synthetic_image(32, 0), synthetic_image(24, 1)]


def test_zero_drop_has_zero_spread(models, images):
    stats = evaluate(*models, images, 0.0, trials=5)
    for s in stats.values():
        assert s.std == 0.0
        assert s.trials == 5


def test_evaluation_is_reproducible(models, images):
    a = evaluate(*models, images, 0.2, trials=3, seed=4)
    b = evaluate(*models, images, 0.2, trials=3, seed=4)
    assert {k: v.per_trial for k, v in a.items()} == {k: v.per_trial for k, v in b.items()}
    c = evaluate(*models, images, 0.2, trials=5, seed=4)
    assert c["P1"].per_trial[:3] == a["P1"].per_trial


def test_loss_lowers_psnr(models, images):
    clean = evaluate(*models, images, 0.0, trials=2)["P1"].mean
    lossy = evaluate(*models, images, 0.3, trials=2)["P1"].mean
    assert lossy < clean


def test_grid_layout_and_csv_round_trip(models, images):
    entry = TrainedModel("m", *models, ChannelSpec.fixed(0.1))
    table = run_grid([entry], images, test_rates=(0.0, 0.1), trials=2)
    assert len(table.cells) == 6
    text = table.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = ReportTable.from_csv(text)
    assert back.to_csv() == text
    cell = back.get("m", 0.1, "P2")
    assert cell.train_regime == "fixed(0.1)"
    assert cell.mean == pytest.approx(table.get("m", 0.1, "P2").mean, abs=5e-5)


def test_grid_failure_becomes_error_cells(models):
    entry = TrainedModel("bad", *models, ChannelSpec())
    table = run_grid([entry], [np.zeros((2, 3, 4))], test_rates=(0.0,), trials=1)
    assert len(table.cells) == 3
    assert all(c.error for c in table.cells)
    assert ",error,error," in table.to_csv()


def test_grid_subrate_filter(models, images):
    entry = TrainedModel("m", *models, ChannelSpec())
    assert run_grid([entry], images, test_rates=(0.0,), subrates=[0.1], trials=1).cells == []

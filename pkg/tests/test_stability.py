import os

import numpy as np
import pytest

from dss.core import load_images_csv
from dss.errors import StageError
from dss.inpaint import HarmonicInpainter
from dss.model import cross_entropy
from dss.stability import (DSSConfig, disruption_mask, restore_and_compose,
                           run_dss, saliency, save_trajectory, state_variable)

from _toy import toy_affine_model


@pytest.fixture
def model():
    rng = np.random.default_rng(0)
    return toy_affine_model(rng.standard_normal((3, 100)),
                            input_shape=(1, 10, 10))


def test_config_validation():
    with pytest.raises(ValueError):
        DSSConfig(loops=0)
    with pytest.raises(ValueError):
        DSSConfig(disrupt_ratio=0.0)
    with pytest.raises(ValueError):
        DSSConfig(disrupt_ratio=1.0)


def test_saliency_uses_predicted_class(model):
    x = np.random.default_rng(1).random((1, 10, 10))
    predicted = model.predict(x)
    assert np.array_equal(saliency(model, x),
                          model.input_gradient(x, predicted))


def test_disruption_mask_count_and_values():
    rng = np.random.default_rng(2)
    grad = rng.standard_normal((1, 10, 10))
    mask = disruption_mask(grad, 0.07)
    assert mask.shape == (10, 10)
    assert int((mask == 0).sum()) == 7  # floor(0.07 * 100)
    assert set(np.unique(mask)) <= {0, 1}


def test_disruption_mask_selects_smallest():
    grad = np.arange(16, dtype=np.float64).reshape(1, 4, 4) - 5.0
    mask = disruption_mask(grad, 3 / 16)
    # the three most negative scores sit at flat indices 0, 1, 2
    assert mask.ravel()[:3].tolist() == [0, 0, 0]
    assert mask.sum() == 13


def test_disruption_mask_tie_break_row_major():
    grad = np.zeros((1, 3, 3))
    mask = disruption_mask(grad, 2 / 9)
    assert mask.ravel().tolist() == [0, 0, 1, 1, 1, 1, 1, 1, 1]


def test_disruption_mask_abs_ranking():
    grad = np.array([[[-5.0, 0.1], [0.2, 3.0]]])
    plain = disruption_mask(grad, 0.25)
    by_abs = disruption_mask(grad, 0.25, use_abs=True)
    assert plain[0, 0] == 0       # most negative raw score
    assert by_abs[0, 1] == 0      # smallest magnitude


def test_disruption_mask_zero_pixels_error():
    with pytest.raises(ValueError):
        disruption_mask(np.zeros((1, 4, 4)), 0.01)


def test_restore_and_compose_bitwise_retention():
    rng = np.random.default_rng(3)
    x = rng.random((1, 8, 8))
    mask = (rng.random((8, 8)) > 0.1).astype(np.uint8)
    x_hat, x_next = restore_and_compose(HarmonicInpainter(), x, mask)
    keep = mask.astype(bool)
    assert np.array_equal(x_next[:, keep], x[:, keep])
    assert np.array_equal(x_next[:, ~keep], x_hat[:, ~keep])


def test_restore_and_compose_bad_restorer_shape():
    def bad(masked, mask):
        return np.zeros((1, 2, 2))

    with pytest.raises(StageError):
        restore_and_compose(bad, np.zeros((1, 4, 4)),
                            np.ones((4, 4), dtype=np.uint8))


def test_state_variable_self_predicted_loss_change(model):
    rng = np.random.default_rng(4)
    a, b = rng.random((1, 10, 10)), rng.random((1, 10, 10))
    expected = (cross_entropy(model.forward(a), model.predict(a))
                - cross_entropy(model.forward(b), model.predict(b)))
    assert state_variable(model, a, b) == pytest.approx(expected, abs=1e-15)


def test_run_dss_trajectory_shape(model):
    x = np.random.default_rng(5).random((1, 10, 10))
    config = DSSConfig(loops=3, disrupt_ratio=0.05)
    trajectory = run_dss(model, HarmonicInpainter(), x, config)
    assert trajectory.loops == 3
    assert len(trajectory.states) == 4
    assert len(trajectory.masks) == 3
    assert len(trajectory.state_vars) == 3
    assert np.array_equal(trajectory.states[0], x)


def test_run_dss_deterministic(model):
    x = np.random.default_rng(6).random((1, 10, 10))
    config = DSSConfig(loops=2, disrupt_ratio=0.05)
    a = run_dss(model, HarmonicInpainter(), x, config)
    b = run_dss(model, HarmonicInpainter(), x, config)
    for sa, sb in zip(a.states, b.states):
        assert np.array_equal(sa, sb)


def test_run_dss_wraps_stage_failures(model):
    def broken(masked, mask):
        raise RuntimeError("restorer exploded")

    x = np.random.default_rng(7).random((1, 10, 10))
    with pytest.raises(StageError, match="dss-loop-1"):
        run_dss(model, broken, x, DSSConfig(loops=2, disrupt_ratio=0.05))


def test_save_trajectory_layout(tmp_path, model):
    x = np.random.default_rng(8).random((1, 10, 10))
    trajectory = run_dss(model, HarmonicInpainter(), x,
                         DSSConfig(loops=2, disrupt_ratio=0.05))
    save_trajectory(tmp_path / "traj", trajectory)
    names = sorted(os.listdir(tmp_path / "traj"))
    assert names == ["Lt.csv", "gen_1.csv", "gen_2.csv", "mask_1.csv",
                     "mask_2.csv", "state_0.csv", "state_1.csv", "state_2.csv"]
    back = load_images_csv(tmp_path / "traj" / "state_2.csv")[0]
    assert np.array_equal(back, trajectory.states[2])
    mask = np.loadtxt(tmp_path / "traj" / "mask_1.csv", delimiter=",")
    assert np.array_equal(mask, trajectory.masks[0])

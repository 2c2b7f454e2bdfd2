import numpy as np
import pytest

from dss.attacks import (AttackConfig, build_triplets, external_attack, fgsm,
                         load_triplets, pgd, run_attack, save_triplets)
from dss.core import LabeledExample
from dss.errors import ContractError, ProtocolError

from _toy import toy_affine_model


@pytest.fixture
def model():
    rng = np.random.default_rng(0)
    return toy_affine_model(rng.standard_normal((3, 4)))


def test_fgsm_closed_form(model):
    x = np.full((1, 2, 2), 0.5)
    label = 1
    grad = model.input_gradient(x, label)
    adv = fgsm(model, x, label, 0.1)
    assert np.array_equal(adv, np.clip(x + 0.1 * np.sign(grad), 0, 1))


def test_fgsm_stays_in_unit_box(model):
    x = np.array([[[0.01, 0.99], [0.5, 0.0]]])
    adv = fgsm(model, x, 0, 0.3)
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_fgsm_linf_budget(model):
    x = np.full((1, 2, 2), 0.5)
    adv = fgsm(model, x, 2, 0.2)
    assert np.max(np.abs(adv - x)) <= 0.2 + 1e-15


def test_pgd_within_ball_and_box(model):
    x = np.full((1, 2, 2), 0.4)
    cfg = AttackConfig("pgd", epsilon=0.25, step_size=0.05, iterations=12, seed=3)
    adv = pgd(model, x, 1, cfg)
    assert np.max(np.abs(adv - x)) <= 0.25 + 1e-12
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_pgd_deterministic_per_seed(model):
    x = np.random.default_rng(1).random((1, 2, 2))
    cfg = AttackConfig("pgd", epsilon=0.2, step_size=0.05, iterations=5, seed=7)
    assert np.array_equal(pgd(model, x, 0, cfg), pgd(model, x, 0, cfg))
    other = AttackConfig("pgd", epsilon=0.2, step_size=0.05, iterations=5, seed=8)
    assert not np.array_equal(pgd(model, x, 0, cfg), pgd(model, x, 0, other))


def test_pgd_no_random_start_from_x(model):
    x = np.full((1, 2, 2), 0.5)
    cfg = AttackConfig("pgd", epsilon=0.1, step_size=0.1, iterations=1,
                       random_start=False)
    grad = model.input_gradient(x, 2)
    assert np.array_equal(pgd(model, x, 2, cfg),
                          np.clip(x + 0.1 * np.sign(grad), x - 0.1, x + 0.1))


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig("fgsm", epsilon=0.0)
    with pytest.raises(ValueError):
        AttackConfig("pgd", epsilon=0.1, step_size=0.2, iterations=10)
    with pytest.raises(ValueError):
        AttackConfig("pgd", epsilon=0.1, step_size=0.05, iterations=0)


def test_run_attack_unknown_method(model):
    cfg = AttackConfig("fgsm", epsilon=0.1)
    cfg.method = "carlini"
    with pytest.raises(ValueError, match="carlini"):
        run_attack(model, np.zeros((1, 2, 2)), 0, cfg)


def test_external_attack_contract(model):
    x = np.full((1, 2, 2), 0.5)

    def oversized(model, x, label, params):
        return np.zeros((1, 3, 3))

    with pytest.raises(ContractError):
        external_attack(oversized, model, x, 0)

    def out_of_range(model, x, label, params):
        return x + 2.0

    out, warnings = external_attack(out_of_range, model, x, 0)
    assert out.max() <= 1.0
    assert warnings

    def crashes(model, x, label, params):
        raise RuntimeError("boom")

    with pytest.raises(ContractError, match="boom"):
        external_attack(crashes, model, x, 0)


def _rigged_model(predictions):
    """predict() walks a fixed list regardless of the input."""

    class Rigged:
        def __init__(self):
            self.calls = 0

        def predict(self, x):
            self.calls += 1
            return predictions[(self.calls - 1) % len(predictions)]

        def input_gradient(self, x, label):
            return np.ones_like(x)

    return Rigged()


def test_build_triplets_filters():
    # example 0: clean correct, attack succeeds -> kept
    # example 1: clean misclassified -> dropped
    # example 2: clean correct, attack fails -> dropped
    model = _rigged_model([0, 1, 1, 1, 1])
    examples = [LabeledExample(np.full((1, 2, 2), 0.5), lbl) for lbl in (0, 0, 1)]
    result = build_triplets(model, examples, AttackConfig("fgsm", epsilon=0.1),
                            seed=0)
    assert len(result.triplets) == 1
    assert result.dropped_misclassified == 1
    assert result.dropped_attack_failed == 1


def test_build_triplets_empty_is_protocol_error():
    model = _rigged_model([9])  # always wrong
    examples = [LabeledExample(np.zeros((1, 2, 2)), 0)]
    with pytest.raises(ProtocolError):
        build_triplets(model, examples, AttackConfig("fgsm", epsilon=0.1), seed=0)


def test_build_triplets_noise_budget(model):
    rng = np.random.default_rng(2)
    examples = []
    for _ in range(6):
        x = rng.random((1, 2, 2))
        examples.append(LabeledExample(x, model.predict(x)))
    result = build_triplets(model, examples, AttackConfig("fgsm", epsilon=0.15),
                            seed=4)
    for t in result.triplets:
        assert np.max(np.abs(t.noisy - t.clean.image)) <= 0.15


def test_triplet_store_roundtrip(tmp_path, model):
    rng = np.random.default_rng(5)
    examples = []
    for _ in range(8):
        x = rng.random((1, 2, 2))
        examples.append(LabeledExample(x, model.predict(x)))
    attack = AttackConfig("fgsm", epsilon=0.2)
    result = build_triplets(model, examples, attack, seed=1)
    save_triplets(tmp_path / "store", result, attack)
    loaded, meta = load_triplets(tmp_path / "store")
    assert len(loaded) == len(result.triplets)
    assert meta["epsilon"] == 0.2
    for orig, back in zip(result.triplets, loaded):
        assert np.array_equal(orig.clean.image, back.clean.image)
        assert np.array_equal(orig.noisy, back.noisy)
        assert np.array_equal(orig.adversarial, back.adversarial)
        assert orig.clean.label == back.clean.label

"""Shared fixtures: the synthetic digit corpus and a trained classifier.

Expensive artifacts (rendered datasets, the trained model checkpoint, the
acceptance report) are cached under tests/_cache so repeat runs are fast.
Delete that directory to force a full rebuild; every artifact is keyed by
the parameters that produced it, so stale reuse cannot happen silently.
"""

import os

import numpy as np
import pytest

from dss.core import LabeledExample, load_idx_images, load_idx_labels
from dss.model import TrainConfig, load_checkpoint, save_checkpoint, train_classifier

from _synth import write_idx_dataset

CACHE_DIR = os.path.join(os.path.dirname(__file__), "_cache")

TRAIN_COUNT, TRAIN_SEED = 6000, 123
TEST_COUNT, TEST_SEED = 1000, 777
MODEL_EPOCHS, MODEL_SEED = 5, 0


@pytest.fixture(scope="session")
def dataset_dir():
    """IDX train/test files for the synthetic digit corpus."""
    directory = os.path.join(CACHE_DIR,
                             f"data-{TRAIN_COUNT}-{TRAIN_SEED}-{TEST_COUNT}-{TEST_SEED}")
    marker = os.path.join(directory, "complete")
    if not os.path.exists(marker):
        write_idx_dataset(directory, TRAIN_COUNT, TRAIN_SEED, "train")
        write_idx_dataset(directory, TEST_COUNT, TEST_SEED, "test")
        open(marker, "w").close()
    return directory


@pytest.fixture(scope="session")
def fixture_model_path(dataset_dir):
    """Checkpoint of the classifier trained on the synthetic corpus."""
    path = os.path.join(CACHE_DIR,
                        f"model-tanh-avg-e{MODEL_EPOCHS}-s{MODEL_SEED}"
                        f"-n{TRAIN_COUNT}.npz")
    if not os.path.exists(path):
        images = np.stack(load_idx_images(
            os.path.join(dataset_dir, "train-images-idx3-ubyte")))
        labels = np.array(load_idx_labels(
            os.path.join(dataset_dir, "train-labels-idx1-ubyte")))
        model = train_classifier(images, labels,
                                 TrainConfig(epochs=MODEL_EPOCHS, seed=MODEL_SEED))
        save_checkpoint(model, path)
    return path


@pytest.fixture(scope="session")
def fixture_model(fixture_model_path):
    return load_checkpoint(fixture_model_path)


@pytest.fixture(scope="session")
def test_examples(dataset_dir):
    """The held-back evaluation split as labeled examples."""
    images = load_idx_images(os.path.join(dataset_dir, "test-images-idx3-ubyte"))
    labels = load_idx_labels(os.path.join(dataset_dir, "test-labels-idx1-ubyte"))
    return [LabeledExample(im, lbl) for im, lbl in zip(images, labels)]

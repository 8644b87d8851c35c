import numpy as np
import pytest

import labelregret as lr


@pytest.fixture
def flat_trainer():
    """Logistic trainer with a small ridge; robust on tiny resamples."""
    return lr.LogisticTrainer(lr.FitOptions(ridge=0.01, include_intercept=False))


@pytest.fixture
def plain_trainer():
    """Unregularized, no-intercept logistic trainer."""
    return lr.LogisticTrainer(lr.FitOptions(ridge=0.0, include_intercept=False))


@pytest.fixture
def small_dataset():
    """Non-separable 8-point, 2-feature dataset with mixed labels."""
    features = lr.gaussian_features(8, 2, 123)
    ground_truth = lr.LogisticModel(np.array([0.9, -0.6]))
    ss = lr.semisynthetic_from_model(features, ground_truth, lr.LabelDrawSeed(123))
    return ss.base


@pytest.fixture
def cluster_ss():
    """Two-cluster semi-synthetic dataset (true probabilities 0.8 / 0.2)."""
    return lr.two_cluster_semisynthetic(200, lr.LabelDrawSeed(11))


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

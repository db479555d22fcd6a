import time

import numpy as np
import pytest

from dlse import io, training
from dlse.core import DlseModel, LseParams


def random_lse(rng, n, K, T):
    return LseParams(T, rng.normal(size=(K, n)), rng.normal(size=K))


def random_model(rng, n, K_plus, K_minus, T):
    return DlseModel(random_lse(rng, n, K_plus, T), random_lse(rng, n, K_minus, T))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def example1_fits():
    """Ten seeded fits of the x^2 + sin(2 pi x) dataset with default settings.

    Shared by the training, optimizer and acceptance tests because each fit
    takes a few seconds.
    """
    fits = []
    for seed in range(10):
        X, y = io.gen_example1(100, seed)
        start = time.perf_counter()
        report = training.fit(training.Dataset(X, y), training.TrainConfig(K=10, rng_seed=seed))
        fits.append((seed, report, time.perf_counter() - start))
    return fits

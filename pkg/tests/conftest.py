import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ramanclf.core import SpectraDataset, prepare
from ramanclf.spectragen import preset_profiles, scaled_profiles, synth_dataset

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_charge():
    """About 200 prepared charge-mimic spectra."""
    return prepare(synth_dataset(scaled_profiles(preset_profiles("charge_mimic"), 0.1), seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def blobs(n_per_class=30, k=3, dim=5, sep=4.0, seed=0):
    """Well separated Gaussian clusters as a SpectraDataset-free (X, y) pair."""
    r = np.random.default_rng(seed)
    centers = r.normal(0, sep, (k, dim))
    X = np.vstack([r.normal(c, 1.0, (n_per_class, dim)) for c in centers])
    y = np.repeat(np.arange(k), n_per_class)
    return X, y


def toy_dataset(counts=(100, 100, 100, 100), n_bins=6, seed=0):
    r = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(counts)), counts)
    rows = r.random((len(labels), n_bins)) + labels[:, None]
    grid = np.arange(n_bins, dtype=float)
    return SpectraDataset(grid, rows, labels, [f"c{i}" for i in range(len(counts))])

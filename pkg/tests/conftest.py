from dataclasses import replace

import numpy as np
import pytest

from latentforest.autoencoder import TrainConfig
from latentforest.flow import FlowConfig
from latentforest.pipelines import RunConfig
from latentforest.tabular import Column, Dataset, FeatureSchema
from latentforest.transformer import AttnConfig
from latentforest.trees import ForestParams, GbtClassifierParams

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def imbalanced_gaussians(n_major=1000, n_minor=50, dim=4, shift=1.0, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(n_major, dim))
    X1 = rng.normal(size=(n_minor, dim)) + shift
    X = np.vstack([X0, X1])
    y = np.concatenate([np.zeros(n_major, dtype=int), np.ones(n_minor, dtype=int)])
    return Dataset(X, y, FeatureSchema.numeric([f"x{i}" for i in range(dim)]))


def mixed_dataset(n_major=120, n_minor=30, seed=0) -> Dataset:
    """Two numeric columns and one three-way categorical column."""
    rng = np.random.default_rng(seed)
    n = n_major + n_minor
    y = np.concatenate([np.zeros(n_major, dtype=int), np.ones(n_minor, dtype=int)])
    num = rng.normal(size=(n, 2)) + y[:, None]
    cat = rng.integers(0, 3, size=n)
    X = np.column_stack([num[:, 0], np.eye(3)[cat], num[:, 1]])
    schema = FeatureSchema((Column("a", "numeric"), Column("c", "categorical", ("p", "q", "r")),
                            Column("b", "numeric")), "y", ("0", "1"))
    return Dataset(X, y, schema)


def fast_config(method="pcaforest", **kw) -> RunConfig:
    """Small settings so full pipeline runs take a fraction of a second."""
    cfg = RunConfig(
        method=method,
        flow=FlowConfig(n_t=5, duplicate_K=5, n_estimators=3, max_depth=3),
        autoencoder=TrainConfig(epochs=5),
        attention=AttnConfig(epochs=2),
        forest=ForestParams(n_estimators=10),
        gbt=GbtClassifierParams(n_estimators=10),
    )
    return replace(cfg, **kw)


@pytest.fixture
def small_data():
    return imbalanced_gaussians(200, 30, dim=4, shift=1.5, seed=3)


@pytest.fixture
def mixed_data():
    return mixed_dataset()

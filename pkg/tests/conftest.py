from pathlib import Path

import numpy as np
import pytest

from labelnet import LabelMatrix, discover_relationships, load_csv

DATA_DIR = Path(__file__).parent / "data"

TOY_ROWS = [
    [1, 1, 1, 0, 0, 0],
    [1, 1, 1, 1, 0, 0],
    [0, 0, 0, 0, 1, 0],
    [0, 1, 1, 0, 1, 0],
    [1, 1, 1, 0, 0, 0],
    [0, 1, 1, 1, 0, 1],
    [0, 0, 1, 1, 1, 0],
    [0, 0, 0, 0, 0, 1],
    [0, 0, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 1],
]


@pytest.fixture(scope="session")
def toy_labels() -> LabelMatrix:
    return LabelMatrix(tuple("ABCDEF"), np.array(TOY_ROWS, dtype=bool))


@pytest.fixture(scope="session")
def toy_dataset():
    return load_csv(DATA_DIR / "toy.csv", set("ABCDEF"))


@pytest.fixture(scope="session")
def toy_relationships(toy_labels):
    return discover_relationships(toy_labels, 2, 2)


@pytest.fixture(scope="session")
def toy_network(toy_labels, toy_relationships):
    from labelnet import build_network

    return build_network(toy_relationships, toy_labels.label_names)


def random_label_matrix(rng: np.random.Generator, q: int, n: int) -> LabelMatrix:
    """Random boolean matrix with per-label densities drawn uniformly."""
    density = rng.uniform(0.05, 0.85, size=q)
    values = rng.random((n, q)) < density
    names = tuple(f"L{i}" for i in range(q))
    return LabelMatrix(names, values)

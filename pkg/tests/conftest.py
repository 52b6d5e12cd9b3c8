from pathlib import Path

import numpy as np
import pytest

import artcombine
from artcombine.schemas import PValueVector

DATA_DIR = Path(artcombine.__file__).parent / "data"


@pytest.fixture
def worked_example_path() -> str:
    return str(DATA_DIR / "worked_example.txt")


@pytest.fixture
def muopioid_path() -> str:
    return str(DATA_DIR / "mu_opioid_pvals.csv")


@pytest.fixture
def worked_example_pvalues() -> PValueVector:
    return PValueVector.full([0.7, 0.07, 0.15, 0.12, 0.08, 0.09])


@pytest.fixture
def write_matrix(tmp_path):
    """Write a square matrix as headerless CSV and return its path"""

    def write(matrix, name="corr.csv") -> str:
        path = tmp_path / name
        np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",")
        return str(path)

    return write

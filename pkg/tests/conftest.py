import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, 'modules'))
sys.path.insert(0, ROOT)

import driftmc_grid
import driftmc_util

SAMPLE_DIR = os.path.join(ROOT, 'sample')


@pytest.fixture
def rng():
    return np.random.default_rng(20140308)

@pytest.fixture
def line_grid():
    """Five 1-degree boxes in a single row"""
    return driftmc_grid.build_grid((0, 5, 0, 1), 1.0)

@pytest.fixture
def square_grid():
    """4 x 4 boxes of 0.25 degrees on the unit square"""
    return driftmc_grid.build_grid((0, 1, 0, 1), 0.25)

@pytest.fixture
def write_file(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return str(path)
    return write

@pytest.fixture(autouse=True, scope='session')
def quiet_logging():
    driftmc_util.setup_logging(quiet=True)

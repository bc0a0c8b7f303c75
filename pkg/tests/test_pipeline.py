import numpy as np
import pytest

import driftmc_absorb
import driftmc_pipeline
import driftmc_ulam
from driftmc_config import RunConfig
from driftmc_grid import StateRoles
from driftmc_ingest import TransitionPairs
from driftmc_util import DriftConfigError

CONF = """
[grid]
lon_min = 0
lon_max = 5
lat_min = 0
lat_max = 1
cell_size = 1
"""


def test_build_matrices(line_grid):
    config = RunConfig(text=CONF)
    pairs = TransitionPairs([0, 0, 1, 2, 3], [1, 1, 2, 3, -1], [0] * 5,
            [0, 1, 2, 2, 0])
    matrices = driftmc_pipeline.build_matrices(config, line_grid, pairs)
    assert list(matrices) == ['W', 'S', 'SF', 'pooled', 'annual']
    assert matrices['W'].matrix[0, 1] == 1.0
    assert matrices['W'].deficit()[3] == 1.0
    assert matrices['pooled'].row_counts[0] == 2
    assert matrices['annual'].T == 360.0
    # W is nilpotent
    assert matrices['annual'].matrix.nnz == 0

def test_initial_distribution(line_grid, write_file):
    uniform = driftmc_pipeline.initial_distribution(line_grid, 7)
    assert np.allclose(uniform[:5], 0.2)
    assert uniform[5:].sum() == 0.0

    single = driftmc_pipeline.initial_distribution(line_grid, 5,
            source='3,0')
    assert list(single) == [0, 0, 0, 1, 0]

    path = write_file('f.csv', "0,0,1\n4,0,3\n")
    weighted = driftmc_pipeline.initial_distribution(line_grid, 5, path)
    assert np.allclose(weighted, [0.25, 0, 0, 0, 0.75])

def test_initial_distribution_rejects(line_grid, write_file):
    with pytest.raises(DriftConfigError):
        driftmc_pipeline.initial_distribution(line_grid, 5, source='9,0')
    with pytest.raises(DriftConfigError):
        driftmc_pipeline.initial_distribution(line_grid, 5, source='1')
    path = write_file('f.csv', "0,0,-1\n")
    with pytest.raises(DriftConfigError):
        driftmc_pipeline.initial_distribution(line_grid, 5, path)

def test_load_any(tmp_path):
    P = driftmc_ulam.TransitionMatrix([[0.5, 0.5], [0.0, 0.9]], 5.0, 'S')
    roles = StateRoles(2, [1], {0: 0.2}, [(0, 1)])
    driftmc_ulam.save_matrix(str(tmp_path / 'P.txt'), P)
    driftmc_absorb.save_chain(str(tmp_path / 'A.txt'),
            driftmc_absorb.augment(P, roles))

    assert isinstance(driftmc_pipeline.load_any(str(tmp_path / 'P.txt')),
            driftmc_ulam.TransitionMatrix)
    A = driftmc_pipeline.load_any(str(tmp_path / 'A.txt'))
    assert isinstance(A, driftmc_absorb.AugmentedChain)
    assert A.n_targets == 1

import numpy as np
import pytest
import scipy.sparse as sparse

import driftmc_ulam
from driftmc_ingest import TransitionPairs
from driftmc_ulam import TransitionMatrix
from driftmc_util import DriftConfigError, DriftNumericalError, OUT_OF_DOMAIN

import oracles


def pairs_from(from_state, to_state):
    n = len(from_state)
    return TransitionPairs(from_state, to_state, np.zeros(n), np.zeros(n))

def test_estimate_divides_exactly():
    pairs = pairs_from([0] * 10 + [1], [1] * 7 + [OUT_OF_DOMAIN] * 3 + [1])
    P = driftmc_ulam.estimate(pairs, 3, 5.0, 'W')
    assert P.matrix[0, 1] == 0.7
    assert P.matrix[1, 1] == 1.0
    assert P.deficit()[0] == pytest.approx(0.3, abs=1e-15)
    assert list(P.row_counts) == [10, 1, 0]
    assert list(P.empty) == [False, False, True]

def test_estimate_rejects_bad_states():
    with pytest.raises(DriftConfigError):
        driftmc_ulam.estimate(pairs_from([3], [0]), 3, 5.0, 'W')

def test_matrix_validation():
    with pytest.raises(DriftNumericalError):
        TransitionMatrix([[0.6, 0.5], [0, 0]], 5.0, 'W')
    with pytest.raises(DriftNumericalError):
        TransitionMatrix([[-0.1, 0.5], [0, 0]], 5.0, 'W')
    with pytest.raises(DriftConfigError):
        TransitionMatrix([[0.5, 0.5], [0, 0]], 5.0, 'spring')

def test_matrix_power_matches_dense(rng):
    A = oracles.random_substochastic(rng, 6)
    got = driftmc_ulam.matrix_power(sparse.csr_matrix(A), 13, tol=0)
    assert np.allclose(got.toarray(), np.linalg.matrix_power(A, 13),
            atol=1e-14, rtol=0)

@pytest.mark.parametrize('exponent', [3, 18])
def test_compose_annual_factor_order(rng, exponent):
    W, S, SF = [oracles.random_substochastic(rng, 4, min_sum=0.9)
            for _ in range(3)]
    annual = driftmc_ulam.compose_annual(
            TransitionMatrix(W, 5.0, 'W'), TransitionMatrix(S, 5.0, 'S'),
            TransitionMatrix(SF, 5.0, 'SF'), exponent)

    oracle = np.eye(4)
    for factor in [W] * exponent + [SF] * exponent + [S] * exponent \
            + [SF] * exponent:
        oracle = oracle @ factor
    assert np.allclose(annual.toarray(), oracle, atol=1e-12, rtol=0)
    assert annual.T == 5.0 * 4 * exponent
    assert annual.label == 'annual'

def test_compose_annual_checks_sizes():
    with pytest.raises(DriftConfigError):
        driftmc_ulam.compose_annual(TransitionMatrix(np.eye(2), 5.0, 'W'),
                TransitionMatrix(np.eye(3), 5.0, 'S'),
                TransitionMatrix(np.eye(2), 5.0, 'SF'))

def test_push_forward_matches_dense(rng):
    P = oracles.random_matrix(rng, 7)
    f = rng.random(7)
    f /= f.sum()
    steps = list(driftmc_ulam.evolve(f, P, 5))
    assert len(steps) == 5
    oracle = f @ np.linalg.matrix_power(P.toarray(), 5)
    assert np.allclose(steps[-1], oracle, atol=1e-15)
    assert np.array_equal(driftmc_ulam.push_forward(f, P, 5), steps[-1])

def test_push_forward_length_check(rng):
    with pytest.raises(DriftConfigError):
        driftmc_ulam.push_forward(np.ones(3), oracles.random_matrix(rng, 4), 1)

def test_markov_test_on_homogeneous_chain():
    rng = np.random.default_rng(7)
    kernel = np.full((3, 3), 0.01) + np.eye(3) * 0.97
    cum = np.cumsum(kernel, axis=1)
    cum[:, -1] = 1.0
    n_walk, n_steps = 400, 1000
    states = np.zeros((n_walk, n_steps + 1), dtype=np.int64)
    states[:, 0] = rng.integers(0, 3, n_walk)
    for t in range(n_steps):
        u = rng.random(n_walk)
        states[:, t + 1] = (cum[states[:, t]] > u[:, None]).argmax(axis=1)

    estimates = []
    for n in range(1, 11):
        start = states[:, :-n:n].ravel()
        end = states[:, n::n].ravel()
        estimates.append(driftmc_ulam.estimate(pairs_from(start, end), 3,
            float(n), 'pooled'))

    table = driftmc_ulam.markov_test(estimates[0], estimates, 2)
    assert [row['n'] for row in table] == list(range(1, 11))
    assert table[0]['deviation'] == pytest.approx(0.0, abs=1e-12)
    assert max(row['deviation'] for row in table) < 0.05

def test_leading_moduli_sorted(rng):
    A = oracles.random_substochastic(rng, 8)
    moduli = driftmc_ulam.leading_moduli(A, 3)
    assert list(moduli) == sorted(moduli, reverse=True)
    assert moduli[0] == pytest.approx(max(abs(np.linalg.eigvals(A))))

def test_save_load_bit_exact(tmp_path, rng):
    pairs = pairs_from(rng.integers(0, 6, 500), rng.integers(-1, 6, 500))
    P = driftmc_ulam.estimate(pairs, 6, 5.0, 'SF')
    path = str(tmp_path / 'P.txt')
    driftmc_ulam.save_matrix(path, P)
    Q = driftmc_ulam.load_matrix(path)
    assert Q.label == 'SF' and Q.T == 5.0
    assert np.array_equal(Q.matrix.indptr, P.matrix.indptr)
    assert np.array_equal(Q.matrix.indices, P.matrix.indices)
    assert np.array_equal(Q.matrix.data, P.matrix.data)
    assert np.array_equal(Q.row_counts, P.row_counts)

def test_load_rejects_foreign_file(write_file):
    path = write_file('P.txt', "0,0,1\n")
    with pytest.raises(DriftConfigError):
        driftmc_ulam.load_matrix(path)

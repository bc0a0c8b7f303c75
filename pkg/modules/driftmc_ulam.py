#!/usr/bin/env python3
# ulam module
#
# driftmc - Markov-chain drift analysis from drifter trajectories
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <http://www.gnu.org/licenses/>.

import logging
import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg

import driftmc_util
from driftmc_util import DriftConfigError, DriftNumericalError, OUT_OF_DOMAIN

DENSE_EIG_LIMIT = 400
LABELS = ('W', 'S', 'SF', 'annual', 'pooled')
MATRIX_MAGIC = 'driftmc-matrix'
MOD_NAME = "ulam"
PRUNE_TOL = 1e-15
ROW_SUM_TOL = 1e-12


class TransitionMatrix():
    """Sparse row-substochastic matrix over the N domain states.

    Mass missing from a row (1 - row sum) is the probability of leaving
    the domain. Rows never sampled are flagged in `empty`.
    """

    def __init__(self, matrix, T, label, row_counts=None):
        matrix = sparse.csr_matrix(matrix, dtype=float, copy=True)
        matrix.eliminate_zeros()
        matrix.sort_indices()

        if matrix.shape[0] != matrix.shape[1]:
            raise DriftConfigError("transition matrix must be square")

        if matrix.nnz and matrix.data.min() < 0:
            raise DriftNumericalError("negative transition probability")

        sums = np.asarray(matrix.sum(axis=1)).ravel()
        if len(sums) and sums.max() > 1 + ROW_SUM_TOL:
            raise DriftNumericalError("row sum {} exceeds 1 (row {})"
                    .format(sums.max(), int(sums.argmax())))

        if label not in LABELS:
            raise DriftConfigError("unknown matrix label: {}".format(label))

        self.matrix = matrix
        self.T = float(T)
        self.label = label
        self.row_counts = None if row_counts is None \
                else np.asarray(row_counts, dtype=np.int64)

        if self.row_counts is not None:
            self.empty = self.row_counts == 0
        else:
            self.empty = sums == 0

        self._transposed = None

    @property
    def n_states(self):
        return self.matrix.shape[0]

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def deficit(self):
        return 1.0 - self.row_sums()

    def transposed(self):
        if self._transposed is None:
            self._transposed = self.matrix.T.tocsr()
        return self._transposed

    def toarray(self):
        return self.matrix.toarray()


def estimate(pairs, N, T, label):
    """Ulam estimate P_ij = #(i->j) / #(i->anything, out of domain included)"""

    from_state = pairs.from_state
    to_state = pairs.to_state

    if len(from_state) and (from_state.min() < 0 or from_state.max() >= N):
        raise DriftConfigError("pair start state outside 0..{}".format(N - 1))
    if len(to_state) and to_state.max() >= N:
        raise DriftConfigError("pair end state outside 0..{}".format(N - 1))

    row_counts = np.bincount(from_state, minlength=N)

    inside = to_state != OUT_OF_DOMAIN
    counts = sparse.coo_matrix((np.ones(int(inside.sum())),
        (from_state[inside], to_state[inside])), shape=(N, N)).tocsr()
    counts.sum_duplicates()
    counts.sort_indices()

    # divide, not multiply by reciprocal: 7/10 must stay 0.7
    per_entry = np.repeat(row_counts, np.diff(counts.indptr))
    counts.data = counts.data / per_entry

    P = TransitionMatrix(counts, T, label, row_counts)

    n_empty = int(P.empty.sum())
    level = logging.WARNING if n_empty else logging.INFO
    driftmc_util.console_message("{}: {} pairs, {} of {} rows empty ({:.1%})"
            .format(label, len(from_state), n_empty, N,
                n_empty / float(N) if N else 0.0), MOD_NAME, level=level)
    return P

def prune(matrix, tol=PRUNE_TOL):
    matrix = matrix.tocsr()
    if tol > 0:
        matrix.data[np.abs(matrix.data) < tol] = 0.0
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix

def matrix_power(matrix, exponent, tol=PRUNE_TOL):
    """Sparse matrix power by repeated squaring, pruned after each product"""

    result = sparse.identity(matrix.shape[0], format='csr')
    base = matrix.tocsr()
    while exponent > 0:
        if exponent & 1:
            result = prune(result @ base, tol)
        exponent >>= 1
        if exponent:
            base = prune(base @ base, tol)
    return result

def compose_annual(P_W, P_S, P_SF, exponent=18, tol=PRUNE_TOL):
    """Season-aware one-year matrix P_W^e P_SF^e P_S^e P_SF^e"""

    n = P_W.n_states
    for P in (P_S, P_SF):
        if P.n_states != n:
            raise DriftConfigError("seasonal matrices differ in size: {} vs {}"
                    .format(n, P.n_states))
        if P.T != P_W.T:
            raise DriftConfigError("seasonal matrices differ in lag: {} vs {}"
                    .format(P_W.T, P.T))

    W = matrix_power(P_W.matrix, exponent, tol)
    S = matrix_power(P_S.matrix, exponent, tol)
    SF = matrix_power(P_SF.matrix, exponent, tol)

    annual = prune(W @ SF, tol)
    annual = prune(annual @ S, tol)
    annual = prune(annual @ SF, tol)

    return TransitionMatrix(annual, P_W.T * 4 * exponent, 'annual')

def leading_moduli(matrix, k):
    """Largest k eigenvalue moduli, descending"""

    matrix = sparse.csr_matrix(matrix)
    n = matrix.shape[0]
    if n <= DENSE_EIG_LIMIT or k >= n - 1:
        vals = np.linalg.eigvals(matrix.toarray())
    else:
        vals = scipy.sparse.linalg.eigs(matrix, k=k, which='LM',
                return_eigenvectors=False, v0=np.ones(n))
    moduli = np.sort(np.abs(vals))[::-1]
    out = np.zeros(k)
    out[:min(k, len(moduli))] = moduli[:k]
    return out

def markov_test(P1, Pn, k_eigs=2):
    """Compare |lambda(P(nT))| against |lambda(P(T))|^n per lag.

    Returns one dict per matrix in Pn with keys n, lam_n, lam_pow,
    deviation (max relative gap over the k moduli) and error.
    """

    if k_eigs < 1:
        raise DriftConfigError("k_eigs must be >= 1")

    try:
        base = leading_moduli(P1.matrix, k_eigs)
    except (np.linalg.LinAlgError,
            scipy.sparse.linalg.ArpackNoConvergence) as e:
        raise DriftNumericalError("eigen-solver failed at lag {}: {}"
                .format(P1.T, e))

    table = []
    for P in Pn:
        n = int(round(P.T / P1.T))
        row = {'n': n, 'lam_pow': base ** n, 'lam_n': None,
                'deviation': None, 'error': None}
        try:
            row['lam_n'] = leading_moduli(P.matrix, k_eigs)
        except (np.linalg.LinAlgError,
                scipy.sparse.linalg.ArpackNoConvergence) as e:
            row['error'] = "no convergence: {}".format(e)
            driftmc_util.console_message("markov test n = {}: {}"
                    .format(n, row['error']), MOD_NAME,
                    level=logging.WARNING)
            table.append(row)
            continue

        ref = row['lam_pow']
        with np.errstate(divide='ignore', invalid='ignore'):
            rel = np.where(ref > 0, np.abs(row['lam_n'] - ref) / ref,
                    np.abs(row['lam_n'] - ref))
        row['deviation'] = float(rel.max())
        table.append(row)

    return table

def _as_operator(P):
    """Transposed CSR of a TransitionMatrix, AugmentedChain or sparse matrix"""
    if hasattr(P, 'transposed'):
        return P.transposed()
    return sparse.csr_matrix(P).T.tocsr()

def _check_distribution(f, op):
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or len(f) != op.shape[1]:
        raise DriftConfigError("distribution has length {}, matrix has {} "\
                "states".format(len(np.atleast_1d(f)), op.shape[1]))
    return f

def evolve(f, P, k):
    """Yield f P, f P^2, ..., f P^k (left multiplication)"""

    op = _as_operator(P)
    f = _check_distribution(f, op)
    for _ in range(k):
        f = op.dot(f)
        yield f

def push_forward(f, P, k):
    """f P^k by k sparse vector-matrix products; P^k is never formed"""

    op = _as_operator(P)
    f = _check_distribution(f, op)
    for _ in range(k):
        f = op.dot(f)
    return f

def write_triplets(path, matrix, header, appendix=()):
    """`#key,value` header, `i,j,value` body, `#role,...` appendix"""

    matrix = sparse.csr_matrix(matrix)
    matrix.sort_indices()
    rows = np.repeat(np.arange(matrix.shape[0]), np.diff(matrix.indptr))

    with open(path, 'w') as f:
        f.write("#{}\n".format(MATRIX_MAGIC))
        f.write("#shape,{},{}\n".format(matrix.shape[0], matrix.shape[1]))
        for key, value in header:
            f.write("#{},{}\n".format(key, value))
        for i, j, v in zip(rows, matrix.indices, matrix.data):
            f.write("{},{},{}\n".format(i, j, driftmc_util.fmt(v)))
        for line in appendix:
            f.write("#{}\n".format(line))

def read_triplets(path):
    """Returns (header dict, csr matrix, appendix lines)"""

    header = {}
    appendix = []
    rows, cols, vals = [], [], []
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DriftConfigError("could not read matrix file {}: {}"
                .format(path, e))

    if not lines or lines[0] != "#" + MATRIX_MAGIC:
        raise DriftConfigError("{} is not a driftmc matrix file".format(path))

    body_started = False
    for line_no, line in enumerate(lines[1:], 2):
        if not line:
            continue
        if line.startswith('#'):
            if body_started or line.startswith('#role,'):
                appendix.append(line[1:])
            else:
                key, _, value = line[1:].partition(',')
                header[key] = value
            continue

        body_started = True
        try:
            i, j, v = line.split(',')
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
        except ValueError:
            raise DriftConfigError("{}:{}: bad triplet".format(path, line_no))

    try:
        n_rows, n_cols = [int(x) for x in header['shape'].split(',')]
    except (KeyError, ValueError):
        raise DriftConfigError("{} has no shape header".format(path))

    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    matrix.sort_indices()
    return header, matrix, appendix

def save_matrix(path, P):
    header = [('lag_days', driftmc_util.fmt(P.T)), ('label', P.label)]
    if P.row_counts is not None:
        header.append(('row_counts',
            " ".join(str(c) for c in P.row_counts)))
    write_triplets(path, P.matrix, header)

def load_matrix(path):
    header, matrix, _ = read_triplets(path)
    try:
        T = float(header['lag_days'])
        label = header['label']
    except (KeyError, ValueError):
        raise DriftConfigError("{} lacks lag_days/label headers".format(path))

    counts = None
    if header.get('row_counts'):
        counts = [int(c) for c in header['row_counts'].split()]
    return TransitionMatrix(matrix, T, label, counts)

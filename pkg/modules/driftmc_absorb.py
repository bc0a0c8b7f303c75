#!/usr/bin/env python3
# absorb module
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

import driftmc_ulam
import driftmc_util
from driftmc_grid import StateRoles
from driftmc_util import DriftConfigError, DriftNumericalError

MOD_NAME = "absorb"
ROW_SUM_TOL = 1e-12


class AugmentedChain():
    """Closed chain over N transient states, the cemetery (index N) and
    M target cemeteries (index N+m for target label m).

    Every row sums to one; the cemetery and the targets are absorbing.
    """

    def __init__(self, matrix, n_transient, roles, T, label, source=None):
        matrix = sparse.csr_matrix(matrix, dtype=float)
        matrix.eliminate_zeros()
        matrix.sort_indices()

        n_total = n_transient + 1 + roles.n_targets
        if matrix.shape != (n_total, n_total):
            raise DriftConfigError("augmented matrix is {}, expected {}"
                    .format(matrix.shape, (n_total, n_total)))

        if matrix.nnz and (matrix.data.min() < 0 or matrix.data.max() > 1):
            raise DriftNumericalError("augmented entries must lie in [0,1]")

        sums = np.asarray(matrix.sum(axis=1)).ravel()
        worst = np.abs(sums - 1.0)
        if worst.max() > ROW_SUM_TOL:
            raise DriftNumericalError("augmented row {} sums to {}"
                    .format(int(worst.argmax()), sums[worst.argmax()]))

        for absorbing in range(n_transient, n_total):
            if matrix[absorbing, absorbing] != 1.0:
                raise DriftNumericalError("state {} is not absorbing"
                        .format(absorbing))

        self.matrix = matrix
        self.n_transient = n_transient
        self.roles = roles
        self.T = float(T)
        self.label = label
        self.source = source
        self._transposed = None

    @property
    def n_states(self):
        return self.matrix.shape[0]

    @property
    def cemetery(self):
        return self.n_transient

    @property
    def n_targets(self):
        return self.roles.n_targets

    def target_index(self, m):
        if not 1 <= m <= self.n_targets:
            raise DriftConfigError("no target {} (M = {})"
                    .format(m, self.n_targets))
        return self.n_transient + m

    def transposed(self):
        if self._transposed is None:
            self._transposed = self.matrix.T.tocsr()
        return self._transposed

    def transient_block(self):
        return self.matrix[:self.n_transient, :self.n_transient]


def add_cemetery(P, roles):
    """(N+1)-state matrix: leak deficits and empty rows go to the cemetery.

    Rows with a deficit that are not declared leaky are routed as well
    and reported; otherwise the chain could not be closed.
    """

    n = P.n_states
    deficit = P.deficit()

    if deficit.min() < -ROW_SUM_TOL:
        raise DriftNumericalError("negative leak deficit {} in row {}"
                .format(deficit.min(), int(deficit.argmin())))
    deficit = np.clip(deficit, 0.0, 1.0)
    deficit[deficit <= ROW_SUM_TOL] = 0.0

    leaky = np.zeros(n, dtype=bool)
    leaky[list(roles.leaky)] = True
    undeclared = (deficit > 0) & ~leaky & ~P.empty
    if undeclared.any():
        driftmc_util.console_message("{} rows lose mass but are not "\
                "declared leaky; routing them to the cemetery"
                .format(int(undeclared.sum())), MOD_NAME,
                level=logging.WARNING)

    rows = np.nonzero(deficit > 0)[0]
    # empty rows: deficit is already 1
    leak = sparse.coo_matrix((deficit[rows], (rows, np.full(len(rows), n))),
            shape=(n + 1, n + 1))
    cemetery = sparse.coo_matrix(([1.0], ([n], [n])), shape=(n + 1, n + 1))

    body = sparse.bmat([[P.matrix, None], [None, sparse.csr_matrix((1, 1))]],
            format='csr')
    return (body + leak + cemetery).tocsr()

def add_beaching(Pc, roles, T=0.0, label='pooled', source=None):
    """Apply beaching to an (N+1)-state matrix, giving the AugmentedChain.

    Sticky rows are scaled by 1 - ell over S and the cemetery; the beached
    mass ell goes to the cemetery for non-debris boxes and to the box's
    own target cemetery for debris boxes (split evenly between targets
    that share a box). Targets are absorbing.
    """

    Pc = sparse.csr_matrix(Pc)
    n = Pc.shape[0] - 1
    M = roles.n_targets
    size = n + 1 + M

    scale = np.ones(n + 1)
    for state, ell in roles.sticky.items():
        scale[state] = 1.0 - ell
    body = sparse.diags(scale) @ Pc
    body = sparse.bmat([[body, None], [None, sparse.csr_matrix((M, M))]],
            format='csr') if M else body.tocsr()

    rows, cols, vals = [], [], []
    debris = roles.debris_states()
    for state, ell in sorted(roles.sticky.items()):
        if state in debris:
            targets = roles.targets_of(state)
            for m in targets:
                rows.append(state)
                cols.append(n + m)
                vals.append(ell / len(targets))
        else:
            rows.append(state)
            cols.append(n)
            vals.append(ell)

    for m in range(1, M + 1):
        rows.append(n + m)
        cols.append(n + m)
        vals.append(1.0)

    extra = sparse.coo_matrix((vals, (rows, cols)), shape=(size, size))
    matrix = (body + extra).tocsr()

    sums = np.asarray(matrix.sum(axis=1)).ravel()
    worst = np.abs(sums - 1.0)
    if worst.max() > ROW_SUM_TOL:
        raise DriftNumericalError("beaching left row {} summing to {}"
                .format(int(worst.argmax()), sums[worst.argmax()]))

    return AugmentedChain(matrix, n, roles, T, label, source)

def augment(P, roles):
    """add_cemetery then add_beaching, keeping the matrix's lag and label"""
    return add_beaching(add_cemetery(P, roles), roles, P.T, P.label, P)

def absorption_split(A):
    """(Q, R): transient block and transient -> {cemetery, targets} block"""
    n = A.n_transient
    return A.matrix[:n, :n], A.matrix[:n, n:]

def absorption_probabilities(A):
    """N x (1+M) eventual absorption probabilities (I - Q)^-1 R"""

    Q, R = absorption_split(A)
    n = A.n_transient
    try:
        lu = scipy.sparse.linalg.splu(
                (sparse.identity(n, format='csc') - Q).tocsc())
        return lu.solve(R.toarray())
    except RuntimeError as e:
        raise DriftNumericalError("fundamental matrix is singular (closed "\
                "class among transient states?): {}".format(e))

def _role_appendix(roles):
    lines = []
    for state in sorted(roles.leaky):
        lines.append("role,leaky,{}".format(state))
    for state, ell in sorted(roles.sticky.items()):
        lines.append("role,sticky,{},{}".format(state, driftmc_util.fmt(ell)))
    for state, m in roles.debris:
        lines.append("role,debris,{},{}".format(state, m))
    for state in roles.candidates:
        lines.append("role,source,{}".format(state))
    return lines

def save_chain(path, A):
    header = [('lag_days', driftmc_util.fmt(A.T)), ('label', A.label),
            ('n_transient', A.n_transient), ('n_targets', A.n_targets)]
    driftmc_ulam.write_triplets(path, A.matrix, header, _role_appendix(A.roles))

def load_chain(path):
    header, matrix, appendix = driftmc_ulam.read_triplets(path)
    try:
        T = float(header['lag_days'])
        label = header['label']
        n = int(header['n_transient'])
    except (KeyError, ValueError):
        raise DriftConfigError("{} is not an augmented chain file"
                .format(path))

    leaky, sticky, debris, candidates = [], {}, [], []
    for line in appendix:
        fields = line.split(',')
        if fields[0] != 'role' or len(fields) < 3:
            continue
        kind, state = fields[1], int(fields[2])
        if kind == 'leaky':
            leaky.append(state)
        elif kind == 'sticky':
            sticky[state] = float(fields[3])
        elif kind == 'debris':
            debris.append((state, int(fields[3])))
        elif kind == 'source':
            candidates.append(state)

    roles = StateRoles(n, leaky, sticky, debris, candidates)
    return AugmentedChain(matrix, n, roles, T, label)

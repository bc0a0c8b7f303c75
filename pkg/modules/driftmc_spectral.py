#!/usr/bin/env python3
# spectral module
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

import json
import logging
import os
import numpy as np
import scipy.sparse as sparse
from shapely.geometry import box, mapping
from shapely.ops import unary_union

import driftmc_grid
import driftmc_ulam
import driftmc_util
from driftmc_base import DriftModuleBase
from driftmc_util import DriftConfigError, DriftNumericalError

COLLINEAR_TOL = 1e-6
DEFAULT_BASIN_THRESHOLD = 0.5
DEFAULT_MAX_ITER = 100000
DEFAULT_TOL = 1e-10
MOD_NAME = "spectral"
POLISH_FACTOR = 1e-3  # iterate past tol down to tol * POLISH_FACTOR
RECURRENCE_EVERY = 25
RESIDUAL_FLOOR = 1e-15
STALL_ITER = 50


class EigenResult():
    """Leading eigenpairs, moduli descending.

    left[i] / right[i] are the vectors of pair i. Pairs that did not
    converge have converged[i] False and their residual kept for the
    caller to judge. A complex-conjugate pair occupies two slots with the
    same modulus and complex[i] True.
    """

    def __init__(self, values, moduli, left, right, residuals, iterations,
            converged, complex_pair):
        self.values = np.asarray(values, dtype=float)
        self.moduli = np.asarray(moduli, dtype=float)
        self.left = np.asarray(left, dtype=float)
        self.right = np.asarray(right, dtype=float)
        self.residuals = np.asarray(residuals, dtype=float)
        self.iterations = np.asarray(iterations, dtype=np.int64)
        self.converged = np.asarray(converged, dtype=bool)
        self.complex = np.asarray(complex_pair, dtype=bool)

    def __len__(self):
        return len(self.moduli)

    @property
    def lambda1(self):
        return float(self.moduli[0])


class BasinResult():
    def __init__(self, members, threshold, lambda_B, T, T_B):
        self.members = np.asarray(members, dtype=np.int64)
        self.threshold = threshold
        self.lambda_B = lambda_B
        self.T = T
        self.T_B = T_B

    @property
    def retention_years(self):
        return self.T_B / driftmc_util.DAYS_PER_MODEL_YEAR


def _as_matrix(P):
    """CSR over transient states of a TransitionMatrix, chain or matrix"""
    if hasattr(P, 'transient_block'):
        return P.transient_block().tocsr()
    if hasattr(P, 'matrix'):
        return P.matrix.tocsr()
    return sparse.csr_matrix(P)

def _normalize(v, norm):
    scale = np.abs(v).sum() if norm == 1 else np.abs(v).max()
    if scale == 0:
        return v, 0.0
    return v / scale, scale

def _sign_fix(v):
    """Largest-magnitude entry positive"""
    if len(v) and v[np.argmax(np.abs(v))] < 0:
        return -v
    return v

def _recurrence_roots(x0, x1, x2):
    """Fit x2 = a x1 + b x0; complex roots of mu^2 - a mu - b betray a
    complex-conjugate dominant pair. Returns (modulus, fit residual) or None.
    """
    along = x1 - x0 * (x0.dot(x1) / x0.dot(x0))
    if np.abs(along).sum() <= COLLINEAR_TOL * np.abs(x1).sum():
        return None

    basis = np.column_stack([x1, x0])
    coef, _, rank, _ = np.linalg.lstsq(basis, x2, rcond=None)
    if rank < 2:
        return None
    a, b = coef
    if a * a + 4 * b >= 0:
        return None
    fit = np.abs(basis @ coef - x2).sum() / max(np.abs(x2).sum(), 1e-300)
    return float(np.sqrt(-b)), float(fit)

def _power_pair(A, AT, deflated, start, tol, max_iter):
    """Left and right power iteration on A minus the deflated pairs.

    deflated is a list of (lam, left, right, left.right). Returns a dict
    with value, left, right, residual, iterations, converged, complex.
    """

    def apply_right(x):
        y = A.dot(x)
        for lam, p, r, pr in deflated:
            y -= lam * r * (p.dot(x) / pr)
        return y

    def apply_left(x):
        y = AT.dot(x)
        for lam, p, r, pr in deflated:
            y -= lam * p * (r.dot(x) / pr)
        return y

    left, _ = _normalize(start.copy(), 1)
    right, _ = _normalize(start.copy(), np.inf)
    lam = 0.0
    residual = np.inf
    best = np.inf
    stalled = 0
    target = max(tol * POLISH_FACTOR, RESIDUAL_FLOOR)

    for iteration in range(1, int(max_iter) + 1):
        new_left = apply_left(left)
        new_right = apply_right(right)

        lam = float(left.dot(new_left) / left.dot(left))
        res_left = np.abs(new_left - lam * left).sum()
        res_right = np.abs(new_right - lam * right).max()
        residual = max(res_left, res_right)

        if lam == 0.0 and not new_left.any():
            # nilpotent: every vector dies
            return {'value': 0.0, 'left': left, 'right': right,
                    'residual': 0.0, 'iterations': iteration,
                    'converged': True, 'complex': False}

        scale = max(abs(lam), RESIDUAL_FLOOR)
        if residual <= target * scale:
            break
        if residual <= tol * scale:
            if residual < best:
                best = residual
                stalled = 0
            else:
                stalled += 1
                if stalled >= STALL_ITER:
                    break

        if iteration % RECURRENCE_EVERY == 0 and residual > tol * scale:
            found = _recurrence_roots(left, new_left, apply_left(new_left))
            if found is not None and found[1] <= tol:
                return {'value': found[0], 'left': left, 'right': right,
                        'residual': found[1], 'iterations': iteration,
                        'converged': True, 'complex': True}

        left, _ = _normalize(new_left, 1)
        right, _ = _normalize(new_right, np.inf)

    scale = max(abs(lam), RESIDUAL_FLOOR)
    return {'value': lam, 'left': left, 'right': right,
            'residual': residual / scale, 'iterations': iteration,
            'converged': residual <= tol * scale, 'complex': False}

def dominant_eigs(P, k=1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, seed=0):
    """Leading k left/right eigenpairs by deflated power iteration.

    The dominant pair starts from the uniform vector (so P = I returns the
    uniform left vector); later pairs start from a seeded random vector.
    The left vector of a nonnegative pair is scaled to sum 1, every right
    vector to max 1.
    """

    if k < 1:
        raise DriftConfigError("k must be >= 1")

    A = _as_matrix(P)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DriftConfigError("eigen problem needs a square matrix")
    if n == 0:
        raise DriftConfigError("empty matrix")
    k = min(k, n)

    AT = A.T.tocsr()
    rng = np.random.default_rng(seed)

    values, moduli, lefts, rights = [], [], [], []
    residuals, iterations, converged, complex_pair = [], [], [], []
    deflated = []

    while len(moduli) < k:
        if not moduli:
            start = np.ones(n)
        else:
            start = rng.random(n) + 0.5

        out = _power_pair(A, AT, deflated, start, tol, max_iter)

        left = _sign_fix(out['left'])
        right = _sign_fix(out['right'])
        if (left >= -1e-12).all():
            left = np.clip(left, 0.0, None)
            left, _ = _normalize(left, 1)
        right, _ = _normalize(right, np.inf)

        slots = 2 if out['complex'] else 1
        for _ in range(min(slots, k - len(moduli))):
            values.append(out['value'])
            moduli.append(abs(out['value']))
            lefts.append(left)
            rights.append(right)
            residuals.append(out['residual'])
            iterations.append(out['iterations'])
            converged.append(out['converged'])
            complex_pair.append(out['complex'])

        if not out['converged']:
            driftmc_util.console_message("eigenpair {} not converged after "\
                    "{} iterations (residual {:.3g})".format(len(moduli),
                        out['iterations'], out['residual']), MOD_NAME,
                    level=logging.WARNING)

        if out['complex'] and len(moduli) < k:
            driftmc_util.console_message("complex pair at modulus {:.6g}; "\
                    "stopping deflation".format(out['value']), MOD_NAME,
                    level=logging.WARNING)
            break

        pr = float(left.dot(right))
        if pr == 0.0:
            break
        deflated.append((out['value'], left, right, pr))

    missing = k - len(moduli)
    if missing:
        values += [np.nan] * missing
        moduli += [np.nan] * missing
        lefts += [np.full(n, np.nan)] * missing
        rights += [np.full(n, np.nan)] * missing
        residuals += [np.nan] * missing
        iterations += [0] * missing
        converged += [False] * missing
        complex_pair += [False] * missing

    return EigenResult(values, moduli, lefts, rights, residuals, iterations,
            converged, complex_pair)

def basin_of_attraction(r, threshold=DEFAULT_BASIN_THRESHOLD):
    """States whose right-eigenvector value exceeds threshold"""
    r = np.asarray(r, dtype=float)
    return np.nonzero(r > threshold)[0]

def restricted_lambda(P, B, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    A = _as_matrix(P)
    B = np.asarray(B, dtype=np.int64)
    if not len(B):
        raise DriftConfigError("basin is empty")
    sub = A[B][:, B]
    return dominant_eigs(sub, 1, tol, max_iter).lambda1

def retention_time(P, B, T, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """T / (1 - lambda_B) with lambda_B the dominant eigenvalue of P on BxB.

    A closed B (lambda_B >= 1) retains forever: inf.
    """

    lambda_B = restricted_lambda(P, B, tol, max_iter)
    if lambda_B >= 1.0:
        driftmc_util.console_message("basin is closed (lambda_B = {}); "\
                "retention is infinite".format(lambda_B), MOD_NAME,
                level=logging.WARNING)
        return np.inf
    return T / (1.0 - lambda_B)

def basin(P, r, T, threshold=DEFAULT_BASIN_THRESHOLD, tol=DEFAULT_TOL,
        max_iter=DEFAULT_MAX_ITER):
    members = basin_of_attraction(r, threshold)
    if not len(members):
        return BasinResult(members, threshold, np.nan, T, np.nan)

    lambda_B = restricted_lambda(P, members, tol, max_iter)
    T_B = np.inf if lambda_B >= 1.0 else T / (1.0 - lambda_B)
    return BasinResult(members, threshold, lambda_B, T, T_B)

def zonal_profile(v, g):
    """Per-latitude-row mean over active boxes and its d/dlat.

    Rows with no active box are NaN in both columns; the derivative is
    taken separately over each unbroken run of wet rows, one-sided at the
    run ends. Returns (lat, mean, deriv).
    """

    v = np.asarray(v, dtype=float)
    if len(v) != g.n_states:
        raise DriftConfigError("vector has {} entries, grid has {} states"
                .format(len(v), g.n_states))

    sums = np.bincount(g.box_lat, weights=v, minlength=g.n_lat)
    counts = np.bincount(g.box_lat, minlength=g.n_lat)
    with np.errstate(invalid='ignore', divide='ignore'):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    lat = g.lat_centers()
    deriv = np.full_like(mean, np.nan)
    rows = np.flatnonzero(counts > 0)
    for run in np.split(rows, np.flatnonzero(np.diff(rows) > 1) + 1):
        if len(run) > 1:
            deriv[run] = np.gradient(mean[run], lat[run])
        else:
            deriv[run] = 0.0
    return lat, mean, deriv

def basin_geometry(g, members):
    """Union of the basin's box polygons"""
    cells = [box(*g.box_bounds(s)) for s in members]
    return unary_union(cells) if cells else None

def write_vector(path, g, v):
    lons, lats = g.centers()
    with open(path, 'w') as f:
        f.write("state,lon_center,lat_center,value\n")
        for state, (x, y, value) in enumerate(zip(lons, lats, v)):
            f.write("{},{},{},{}\n".format(state, driftmc_util.fmt(x),
                driftmc_util.fmt(y), driftmc_util.fmt(value)))

def write_zonal(path, lat, mean, deriv):
    with open(path, 'w') as f:
        f.write("lat,mean,deriv\n")
        for row in zip(lat, mean, deriv):
            f.write(",".join(driftmc_util.fmt(x) for x in row) + "\n")

def write_basin_geojson(path, g, result):
    geometry = basin_geometry(g, result.members)
    feature = {'type': 'Feature',
            'geometry': mapping(geometry) if geometry is not None else None,
            'properties': {'threshold': result.threshold,
                'n_states': int(len(result.members)),
                'lambda_B': result.lambda_B,
                'retention_days': result.T_B}}
    with open(path, 'w') as f:
        json.dump({'type': 'FeatureCollection', 'features': [feature]}, f,
                sort_keys=True)

def arc_basin_latitudes(g, roles, members):
    """Latitudes of candidate sources lying in the basin, sorted"""
    inside = sorted(set(roles.candidates) & set(int(m) for m in members))
    if not inside:
        return np.array([])
    _, lats = g.centers(inside)
    return np.sort(lats)


def start(config):
    return DriftModuleSpectral(config)

class DriftModuleSpectral(DriftModuleBase):
    def __init__(self, config):
        self.description = "spectral module: eigenvectors, basin of "\
                "attraction and retention time"
        self.settings = {'k_eigs': config.k_eigs,
                'tol': config.eig_tol,
                'max_iter': config.eig_max_iter}
        self.config = config

        driftmc_util.console_message("loaded", MOD_NAME)

    def commands(self):
        return [('spectral', "Eigen-analysis of the annual matrix")]

    def arguments(self, command, parser):
        parser.add_argument('--matrix', default=None,
                help="matrix file to analyze (default: out/P_annual.txt)")

    def cmd_spectral(self, args):
        """Eigenvector CSVs, zonal profiles, basin GeoJSON and report"""

        config = self.config
        config.validate(need=('roles',))
        g = driftmc_grid.load_grid(config)
        roles = driftmc_grid.load_roles(g, config.roles)

        path = getattr(args, 'matrix', None) \
                or os.path.join(config.out, 'P_annual.txt')
        if not os.path.isfile(path):
            raise DriftConfigError("no matrix at {}; run build first"
                    .format(path))
        P = driftmc_ulam.load_matrix(path)
        if P.n_states != g.n_states:
            raise DriftConfigError("matrix has {} states, grid has {}"
                    .format(P.n_states, g.n_states))

        eigs = dominant_eigs(P, self.settings['k_eigs'],
                self.settings['tol'], self.settings['max_iter'], config.seed)
        if not eigs.converged[0]:
            raise DriftNumericalError("dominant eigenpair did not converge "\
                    "(residual {:.3g})".format(eigs.residuals[0]))

        os.makedirs(config.out, exist_ok=True)
        for i in range(len(eigs)):
            if np.isnan(eigs.moduli[i]):
                continue
            write_vector(os.path.join(config.out, 'eig_left_{}.csv'
                .format(i + 1)), g, eigs.left[i])
            write_vector(os.path.join(config.out, 'eig_right_{}.csv'
                .format(i + 1)), g, eigs.right[i])

        for side, vec in (('left', eigs.left[0]), ('right', eigs.right[0])):
            write_zonal(os.path.join(config.out, 'zonal_{}.csv'.format(side)),
                    *zonal_profile(vec, g))

        result = basin(P, eigs.right[0], P.T, config.basin_threshold,
                self.settings['tol'], self.settings['max_iter'])
        write_basin_geojson(os.path.join(config.out, 'basin.geojson'), g,
                result)

        arc = arc_basin_latitudes(g, roles, result.members)
        per_year = driftmc_util.DAYS_PER_MODEL_YEAR / P.T

        lines = [('matrix', os.path.basename(path)),
                ('lag_days', driftmc_util.fmt(P.T))]
        for i in range(len(eigs)):
            lines.append(('lambda_{}'.format(i + 1),
                driftmc_util.fmt(eigs.moduli[i])))
            lines.append(('residual_{}'.format(i + 1),
                driftmc_util.fmt(eigs.residuals[i])))
            if eigs.complex[i]:
                lines.append(('complex_{}'.format(i + 1), 'yes'))
        lines.append(('decay_per_year_1',
            driftmc_util.fmt(1.0 - eigs.moduli[0] ** per_year)))
        if len(eigs) > 1 and not np.isnan(eigs.moduli[1]):
            lines.append(('decay_per_year_2',
                driftmc_util.fmt(1.0 - eigs.moduli[1] ** per_year)))
        lines += [('basin_threshold', driftmc_util.fmt(result.threshold)),
                ('basin_states', len(result.members)),
                ('lambda_B', driftmc_util.fmt(result.lambda_B)),
                ('retention_days', driftmc_util.fmt(result.T_B)),
                ('retention_years', driftmc_util.fmt(result.retention_years))]
        if len(arc):
            lines += [('arc_basin_lat_min', driftmc_util.fmt(arc.min())),
                    ('arc_basin_lat_max', driftmc_util.fmt(arc.max()))]
        else:
            lines.append(('arc_basin', 'none'))

        with open(os.path.join(config.out, 'spectral_report.txt'), 'w') as f:
            for key, value in lines:
                f.write("{}: {}\n".format(key, value))

        driftmc_util.console_message("lambda1 = {:.6g}, |B| = {}, T_B = {:.6g} "\
                "d".format(eigs.lambda1, len(result.members), result.T_B),
                MOD_NAME)
        return 0

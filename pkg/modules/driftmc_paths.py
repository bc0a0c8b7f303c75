#!/usr/bin/env python3
# paths module
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
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
import numpy as np
import scipy.sparse as sparse
from scipy.sparse.csgraph import dijkstra
from shapely.geometry import LineString, mapping

import driftmc_bayes
import driftmc_grid
import driftmc_util
from driftmc_base import DriftModuleBase
from driftmc_util import DriftConfigError, DriftNumericalError

MOD_NAME = "paths"
NO_STATE = -1


class PathResult():
    """Most probable path; states[-1] is the target's absorbing index.

    An infeasible result has no states, log_prob -inf and an error note.
    """

    def __init__(self, states, log_prob, seasons, target, steps, source=None,
            error=None):
        self.states = [int(s) for s in states]
        self.log_prob = float(log_prob)
        self.seasons = list(seasons)
        self.target = target
        self.steps = steps
        self.source = source if source is not None \
                else (self.states[0] if self.states else None)
        self.error = error

    @property
    def feasible(self):
        return bool(self.states) and np.isfinite(self.log_prob)

    @classmethod
    def infeasible(cls, target, steps, source=None, note=None):
        return cls([], -np.inf, [], target, steps, source,
                note or "no feasible path")


def _log_entries(matrix):
    """(rows, cols, log p) of the positive entries of a sparse block"""
    coo = sparse.coo_matrix(matrix)
    keep = coo.data > 0
    return coo.row[keep], coo.col[keep], np.log(coo.data[keep])

def _max_plus(V, rows, cols, logp, n_cols):
    """W[j] = max_i V[i] + log p_ij and its argmax, ties to the smallest i"""

    value = V[rows] + logp
    live = np.isfinite(value)
    rows, cols, value = rows[live], cols[live], value[live]

    W = np.full(n_cols, -np.inf)
    back = np.full(n_cols, NO_STATE, dtype=np.int64)
    if not len(value):
        return W, back

    order = np.lexsort((rows, -value, cols))
    cols_sorted = cols[order]
    _, first = np.unique(cols_sorted, return_index=True)
    best = order[first]
    W[cols[best]] = value[best]
    back[cols[best]] = rows[best]
    return W, back

def most_probable_path(schedule, sources, b, K):
    """Fixed-length most probable path from any of sources into target b.

    Every state before step K stays transient; the last step enters the
    target cemetery of b. Forward DP in log space with backpointers.
    """

    if K < 1:
        raise DriftConfigError("path length must be >= 1")
    if not 1 <= b <= schedule.n_targets:
        raise DriftConfigError("no target {} (M = {})"
                .format(b, schedule.n_targets))

    n = schedule.n_transient
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if not len(sources) or sources.min() < 0 or sources.max() >= n:
        raise DriftConfigError("path sources must be transient states")

    seasons = schedule.seasons(K)
    chains = schedule.chains_for(K)
    target_col = n + b

    V = np.full(n, -np.inf)
    V[sources] = 0.0

    cache = {}
    backs = []
    for k in range(K - 1):
        chain = chains[k]
        if id(chain) not in cache:
            cache[id(chain)] = _log_entries(chain.transient_block())
        V, back = _max_plus(V, *cache[id(chain)], n)
        backs.append(back)

    column = chains[K - 1].matrix[:n, target_col].toarray().ravel()
    with np.errstate(divide='ignore'):
        final = V + np.log(column)
    if not np.isfinite(final).any():
        source = int(sources[0]) if len(sources) == 1 else None
        return PathResult.infeasible(b, K, source)

    last = int(np.argmax(final))
    states = [target_col, last]
    for back in reversed(backs):
        states.append(int(back[states[-1]]))
    states.reverse()

    return PathResult(states, final[last], seasons, b, K)

def path_log_probability(schedule, states):
    """Sum of step log-probabilities along states under the schedule"""
    K = len(states) - 1
    total = 0.0
    for k, chain in enumerate(schedule.chains_for(K)):
        p = chain.matrix[states[k], states[k + 1]]
        if p <= 0:
            return -np.inf
        total += np.log(p)
    return total

def most_probable_paths(schedule, sources, b, K, threads=None):
    """Per-source paths (in sources order) and the global best"""

    def one(source):
        return most_probable_path(schedule, [source], b, K)

    with ThreadPoolExecutor(max_workers=threads) as executor:
        per_source = list(executor.map(one, [int(s) for s in sources]))

    best = most_probable_path(schedule, sources, b, K)
    for result in per_source:
        if not result.feasible:
            driftmc_util.console_message("target {}: no path of {} steps "\
                    "from state {}".format(b, K, result.source), MOD_NAME,
                    level=logging.DEBUG)
    return per_source, best

def unconstrained_best_path(P, source, target):
    """Maximum-probability path of any length: Dijkstra on -log p"""

    if hasattr(P, 'matrix'):
        P = P.matrix
    P = sparse.csr_matrix(P)
    P.eliminate_zeros()
    n = P.shape[0]
    for s in (source, target):
        if not 0 <= s < n:
            raise DriftConfigError("state {} outside 0..{}".format(s, n - 1))

    # explicit zeros stay edges: probability-one steps cost nothing
    weights = sparse.csr_matrix((-np.log(P.data), P.indices.copy(),
        P.indptr.copy()), shape=P.shape)

    dist, pred = dijkstra(weights, directed=True, indices=source,
            return_predecessors=True)
    if not np.isfinite(dist[target]):
        raise DriftNumericalError("state {} is unreachable from {}"
                .format(target, source))

    states = [target]
    while states[-1] != source:
        states.append(int(pred[states[-1]]))
    states.reverse()

    return PathResult(states, -dist[target], [None] * (len(states) - 1),
            target, len(states) - 1, source)

def path_to_geojson(p, g, properties=None):
    """LineString of box centers; the absorbing vertex sits on the last box"""

    props = {'target': p.target, 'steps': p.steps, 'source': p.source}
    props.update(properties or {})

    if not p.feasible:
        props['error'] = p.error or "no feasible path"
        return {'type': 'Feature', 'geometry': None, 'properties': props}

    boxes = [s for s in p.states if s < g.n_states]
    lons, lats = g.centers(boxes)
    coords = list(zip(lons.tolist(), lats.tolist()))
    while len(coords) < len(p.states):
        coords.append(coords[-1])

    props.update({'log_prob': p.log_prob,
        'vertex_step': list(range(len(p.states))),
        'vertex_state': p.states,
        'seasons': p.seasons})
    return {'type': 'Feature', 'geometry': mapping(LineString(coords)),
            'properties': props}

def common_start(best_by_target):
    """Best source shared by more than one target: {source: [targets]}"""
    counts = Counter(p.source for p in best_by_target.values() if p.feasible)
    shared = {}
    for b, p in sorted(best_by_target.items()):
        if p.feasible and counts[p.source] > 1:
            shared.setdefault(p.source, []).append(b)
    return shared

def path_steps(config, schedule, args):
    """Steps per target: --steps, [paths] steps, else the observations"""

    steps = getattr(args, 'steps', None) or config.path_steps
    targets = config.path_targets or list(range(1, schedule.n_targets + 1))
    if steps:
        return {b: int(steps) for b in targets}

    if not config.observations or not os.path.isfile(config.observations):
        raise DriftConfigError("paths need [paths] steps or an observations "\
                "file")
    observations = driftmc_bayes.load_observations(config.observations,
            schedule.T, schedule.roles)
    by_target = {obs.target: obs.steps for obs in observations}
    return {b: by_target[b] for b in targets if b in by_target}


def start(config):
    return DriftModulePaths(config)

class DriftModulePaths(DriftModuleBase):
    def __init__(self, config):
        self.description = "paths module: most probable fixed-length paths"
        self.settings = {}
        self.config = config

        driftmc_util.console_message("loaded", MOD_NAME)

    def commands(self):
        return [('paths', "Most probable paths into each target")]

    def arguments(self, command, parser):
        parser.add_argument('--model', choices=driftmc_bayes.MODELS,
                default='nonautonomous', help="chain the paths run on")
        parser.add_argument('--steps', type=int, default=None,
                help="path length K for every target")

    def cmd_paths(self, args):
        """Path GeoJSON per (source mode, target) and best-source CSV"""

        config = self.config
        config.validate(need=('roles',))
        g = driftmc_grid.load_grid(config)
        roles = driftmc_grid.load_roles(g, config.roles)
        schedule = driftmc_bayes.load_schedule(config,
                getattr(args, 'model', None) or 'nonautonomous')
        candidates, _, _ = driftmc_bayes.candidates_by_latitude(g, roles)

        steps = path_steps(config, schedule, args)
        if not steps:
            raise DriftConfigError("no targets to trace")

        with ThreadPoolExecutor(max_workers=config.threads) as executor:
            results = list(executor.map(
                lambda b: (b, most_probable_paths(schedule, candidates, b,
                    steps[b], 1)), sorted(steps)))

        features = []
        best_by_target = {}
        for b, (per_source, best) in results:
            best_by_target[b] = best
            features.append(path_to_geojson(best, g, {'mode': 'global'}))
            for p in per_source:
                features.append(path_to_geojson(p, g, {'mode': 'source'}))
            if not best.feasible:
                driftmc_util.console_message("target {}: no feasible path of "\
                        "{} steps".format(b, steps[b]), MOD_NAME,
                        level=logging.WARNING)

        os.makedirs(config.out, exist_ok=True)
        with open(os.path.join(config.out, 'paths.geojson'), 'w') as f:
            json.dump({'type': 'FeatureCollection', 'features': features}, f,
                    sort_keys=True)

        with open(os.path.join(config.out, 'paths.csv'), 'w') as f:
            f.write("target,best_source,logprob\n")
            for b, best in sorted(best_by_target.items()):
                source = best.source if best.feasible else ''
                f.write("{},{},{}\n".format(b, source,
                    driftmc_util.fmt(best.log_prob)))

        shared = common_start(best_by_target)
        with open(os.path.join(config.out, 'common_start.txt'), 'w') as f:
            for source, targets in sorted(shared.items()):
                lon, lat = g.centers([source])
                f.write("{}: lon {} lat {} targets {}\n".format(source,
                    driftmc_util.fmt(lon[0]), driftmc_util.fmt(lat[0]),
                    ",".join(str(b) for b in targets)))
                driftmc_util.console_message("targets {} share start box {} "\
                        "({:.4g}, {:.4g})".format(targets, source, lon[0],
                            lat[0]), MOD_NAME)
        return 0

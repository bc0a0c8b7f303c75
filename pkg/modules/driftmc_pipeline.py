#!/usr/bin/env python3
# build/evolve pipeline module
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

import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
import numpy as np
import pandas as pd

import driftmc_absorb
import driftmc_grid
import driftmc_ingest
import driftmc_ulam
import driftmc_util
from driftmc_base import DriftModuleBase
from driftmc_ingest import SEASONS
from driftmc_util import DriftConfigError, OUT_OF_DOMAIN

MOD_NAME = "pipeline"


def build_matrices(config, g, pairs):
    """Seasonal, pooled and annual TransitionMatrix objects by label"""

    T = config.lag_days
    N = g.n_states
    matrices = OrderedDict()
    for season, part in driftmc_ingest.season_split(pairs).items():
        matrices[season] = driftmc_ulam.estimate(part, N, T, season)
    matrices['pooled'] = driftmc_ulam.estimate(pairs, N, T, 'pooled')
    matrices['annual'] = driftmc_ulam.compose_annual(matrices['W'],
            matrices['S'], matrices['SF'], config.exponent, config.prune_tol)
    return matrices

def markov_table(config, g, tracks):
    """Markov test over lags n * markov_lag_days, n = 1..markov_max_n"""

    base = config.markov_lag_days
    estimates = []
    for n in range(1, config.markov_max_n + 1):
        pairs = driftmc_ingest.extract_pairs(tracks, g, n * base,
                epoch=config.epoch, tolerance=config.time_tolerance)
        estimates.append(driftmc_ulam.estimate(pairs, g.n_states, n * base,
            'pooled'))
    return driftmc_ulam.markov_test(estimates[0], estimates, config.k_eigs)

def write_box_counts(path, g, diag):
    lons, lats = g.centers()
    columns = OrderedDict([('state', np.arange(g.n_states)),
        ('lon_index', g.box_lon), ('lat_index', g.box_lat),
        ('lon', lons), ('lat', lats),
        ('samples', diag['samples']), ('drifters', diag['drifters'])])
    for code, season in enumerate(SEASONS):
        columns['samples_' + season] = diag['season_samples'][code]
        columns['drifters_' + season] = diag['season_drifters'][code]
    pd.DataFrame(columns).to_csv(path, index=False, float_format='%.17g')

def build_report(report, pairs, matrices, diag):
    lines = [('rows', report['rows']), ('valid', report['valid']),
            ('malformed', report['malformed']),
            ('drogued', report['drogued']),
            ('duplicates', report['duplicates']),
            ('drifters', report['drifters']), ('pairs', len(pairs))]

    for label, P in matrices.items():
        sums = P.row_sums()
        lines.append(('{}_lag_days'.format(label), driftmc_util.fmt(P.T)))
        if P.row_counts is not None:
            lines.append(('{}_pairs'.format(label), int(P.row_counts.sum())))
        lines += [('{}_empty_fraction'.format(label),
                driftmc_util.fmt(P.empty.mean())),
                ('{}_row_sum_min'.format(label),
                    driftmc_util.fmt(sums.min())),
                ('{}_row_sum_max'.format(label),
                    driftmc_util.fmt(sums.max())),
                ('{}_nnz'.format(label), P.matrix.nnz)]

    for code, season in enumerate(SEASONS):
        counts = diag['season_drifters'][code]
        lines += [('{}_drifters_per_box_mean'.format(season),
                driftmc_util.fmt(counts.mean())),
                ('{}_drifters_per_box_min'.format(season), int(counts.min())),
                ('{}_drifters_per_box_max'.format(season), int(counts.max()))]
    return lines

def write_markov(path, table):
    with open(path, 'w') as f:
        f.write("n,eig,lam_n,lam_pow,deviation\n")
        for row in table:
            lam_pow = row['lam_pow']
            for i in range(len(lam_pow)):
                lam_n = row['lam_n'][i] if row['lam_n'] is not None \
                        else np.nan
                deviation = row['deviation'] if row['deviation'] is not None \
                        else np.nan
                f.write("{},{},{},{},{}\n".format(row['n'], i + 1,
                    driftmc_util.fmt(lam_n), driftmc_util.fmt(lam_pow[i]),
                    driftmc_util.fmt(deviation)))

def load_any(path):
    """AugmentedChain when the file carries chain headers, else matrix"""
    header, _, _ = driftmc_ulam.read_triplets(path)
    if 'n_transient' in header:
        return driftmc_absorb.load_chain(path)
    return driftmc_ulam.load_matrix(path)

def initial_distribution(g, n_states, path=None, source=None):
    """Normalized start vector from a lon_index,lat_index,weight file, a
    single box, or uniform over the domain"""

    f = np.zeros(n_states)
    if source is not None:
        box = driftmc_util.parse_index_list(source)
        if len(box) != 2:
            raise DriftConfigError("--source wants lon_index,lat_index")
        state = g.box_to_state(*box)
        if state == OUT_OF_DOMAIN:
            raise DriftConfigError("source box {} is not active".format(box))
        f[state] = 1.0
        return f

    if path is None:
        f[:g.n_states] = 1.0 / g.n_states
        return f

    try:
        frame = pd.read_csv(path, header=None, comment='#',
                names=['lon_index', 'lat_index', 'weight'])
        frame = frame.apply(pd.to_numeric, errors='raise')
    except (OSError, ValueError, pd.errors.EmptyDataError) as e:
        raise DriftConfigError("could not read distribution {}: {}"
                .format(path, e))

    for i, j, w in frame.itertuples(index=False):
        state = g.box_to_state(int(i), int(j))
        if state == OUT_OF_DOMAIN or w < 0:
            raise DriftConfigError("bad distribution record ({},{},{})"
                    .format(i, j, w))
        f[state] += w
    if f.sum() <= 0:
        raise DriftConfigError("distribution {} has no mass".format(path))
    return f / f.sum()


def start(config):
    return DriftModulePipeline(config)

class DriftModulePipeline(DriftModuleBase):
    def __init__(self, config):
        self.description = "pipeline module: build chains, evolve densities"
        self.settings = {'prune_tol': config.prune_tol,
                'markov_max_n': config.markov_max_n}
        self.config = config

        driftmc_util.console_message("loaded", MOD_NAME)

    def commands(self):
        return [('build', "Estimate and augment the transition matrices"),
                ('evolve', "Push a distribution forward")]

    def arguments(self, command, parser):
        if command == 'build':
            parser.add_argument('--markov', action='store_true',
                    help="run the Markov test over lag multiples")
        elif command == 'evolve':
            parser.add_argument('--matrix', default=None,
                    help="matrix or chain file (default: out/A_pooled.txt)")
            parser.add_argument('--initial', default=None,
                    help="lon_index,lat_index,weight start distribution")
            parser.add_argument('--source', default=None,
                    help="start from one box: lon_index,lat_index")
            parser.add_argument('--steps', type=int, default=1)
            parser.add_argument('--every', type=int, default=1,
                    help="dump every n-th step")

    def cmd_build(self, args):
        """ingest -> ulam -> absorb; writes P_*, A_* and the build report"""

        config = self.config
        config.prune_tol = self.settings['prune_tol']
        config.validate(need=('trajectories', 'roles'))

        g = driftmc_grid.load_grid(config)
        roles = driftmc_grid.load_roles(g, config.roles)
        tracks, report, pairs = driftmc_ingest.load_pairs(config, g,
                config.lag_days)
        matrices = build_matrices(config, g, pairs)

        with ThreadPoolExecutor(max_workers=config.threads) as executor:
            chains = list(executor.map(
                lambda P: driftmc_absorb.augment(P, roles),
                matrices.values()))

        os.makedirs(config.out, exist_ok=True)
        for (label, P), A in zip(matrices.items(), chains):
            driftmc_ulam.save_matrix(os.path.join(config.out,
                'P_{}.txt'.format(label)), P)
            driftmc_absorb.save_chain(os.path.join(config.out,
                'A_{}.txt'.format(label)), A)

        diag = driftmc_ingest.box_diagnostics(tracks, g, epoch=config.epoch)
        write_box_counts(os.path.join(config.out, 'box_counts.csv'), g, diag)

        lines = build_report(report, pairs, matrices, diag)
        if getattr(args, 'markov', False):
            config.markov_max_n = self.settings['markov_max_n']
            table = markov_table(config, g, tracks)
            write_markov(os.path.join(config.out, 'markov_test.csv'), table)
            worst = [r['deviation'] for r in table
                    if r['deviation'] is not None]
            if worst:
                lines.append(('markov_max_deviation',
                    driftmc_util.fmt(max(worst))))

        with open(os.path.join(config.out, 'build_report.txt'), 'w') as f:
            for key, value in lines:
                f.write("{}: {}\n".format(key, value))

        driftmc_util.console_message("{} pairs, matrices written to {}"
                .format(len(pairs), config.out), MOD_NAME)
        return 0

    def cmd_evolve(self, args):
        """Dump f P^k for k = every, 2 every, ..., steps"""

        config = self.config
        steps = getattr(args, 'steps', 1)
        every = max(1, getattr(args, 'every', 1))
        if steps < 0:
            raise DriftConfigError("steps must be >= 0")

        g = driftmc_grid.load_grid(config)
        path = getattr(args, 'matrix', None) \
                or os.path.join(config.out, 'A_pooled.txt')
        if not os.path.isfile(path):
            raise DriftConfigError("no matrix at {}; run build first"
                    .format(path))
        P = load_any(path)
        n_states = P.n_states
        n_transient = getattr(P, 'n_transient', n_states)
        if n_transient != g.n_states:
            raise DriftConfigError("matrix has {} domain states, grid has {}"
                    .format(n_transient, g.n_states))

        f = initial_distribution(g, n_states, getattr(args, 'initial', None),
                getattr(args, 'source', None))
        lons, lats = g.centers()

        os.makedirs(config.out, exist_ok=True)
        mass_rows = [(0, f[:n_transient].sum(), f[n_transient:].sum())]
        for k, fk in enumerate(driftmc_ulam.evolve(f, P, steps), 1):
            mass_rows.append((k, fk[:n_transient].sum(),
                fk[n_transient:].sum()))
            if k % every and k != steps:
                continue
            with open(os.path.join(config.out, 'evolve_{:04d}.csv'
                    .format(k)), 'w') as out:
                out.write("state,lon_center,lat_center,value\n")
                for state, value in enumerate(fk):
                    if state < n_transient:
                        out.write("{},{},{},{}\n".format(state,
                            driftmc_util.fmt(lons[state]),
                            driftmc_util.fmt(lats[state]),
                            driftmc_util.fmt(value)))
                    else:
                        out.write("{},,,{}\n".format(state,
                            driftmc_util.fmt(value)))

        with open(os.path.join(config.out, 'evolve_mass.csv'), 'w') as out:
            out.write("step,domain,absorbed\n")
            for k, inside, absorbed in mass_rows:
                out.write("{},{},{}\n".format(k, driftmc_util.fmt(inside),
                    driftmc_util.fmt(absorbed)))

        driftmc_util.console_message("{} steps from {}; {:.6g} of the mass "\
                "still in the domain".format(steps, os.path.basename(path),
                    mass_rows[-1][1]), MOD_NAME)
        return 0

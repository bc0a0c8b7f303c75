#!/usr/bin/env python3
# bayes module
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
import os
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import numpy as np
import pandas as pd
from scipy.special import logsumexp

import driftmc_absorb
import driftmc_grid
import driftmc_util
from driftmc_base import DriftModuleBase
from driftmc_ingest import SEASONS, SeasonCalendar
from driftmc_util import DriftConfigError, DriftNumericalError, OUT_OF_DOMAIN

CDF_TOL = 1e-15
DEFAULT_CPI_LEVEL = 0.95
MODELS = ('nonautonomous', 'pooled', 'annual')
MOD_NAME = "bayes"

Observation = namedtuple('Observation', ['target', 'days', 'name', 'steps'])


class ChainSchedule():
    """Which augmented chain governs each step.

    Seasonal schedules pick the chain by the calendar season of the step's
    start date (crash date + k T); autonomous ones reuse a single chain.
    """

    def __init__(self, chains, crash_date=None, calendar=None):
        if hasattr(chains, 'matrix'):
            self.chains = {None: chains}
            self.autonomous = True
        else:
            missing = [s for s in SEASONS if s not in chains]
            if missing:
                raise DriftConfigError("seasonal schedule lacks: {}"
                        .format(", ".join(missing)))
            self.chains = {s: chains[s] for s in SEASONS}
            self.autonomous = False

        first = next(iter(self.chains.values()))
        for chain in self.chains.values():
            if chain.n_states != first.n_states \
                    or chain.n_transient != first.n_transient \
                    or chain.T != first.T:
                raise DriftConfigError("scheduled chains differ in size or lag")

        self.T = first.T
        self.n_transient = first.n_transient
        self.n_targets = first.n_targets
        self.roles = first.roles
        self.crash_date = crash_date or driftmc_util.DEFAULT_EPOCH
        self.calendar = calendar or SeasonCalendar()

    @classmethod
    def seasonal(cls, chains, crash_date, calendar=None):
        return cls(chains, crash_date, calendar)

    @classmethod
    def constant(cls, chain):
        return cls(chain)

    def seasons(self, K):
        """Season label of steps 0..K-1 (None when autonomous)"""
        if self.autonomous:
            return [None] * K
        codes = self.calendar.season_codes(self.crash_date,
                self.T * np.arange(K))
        return [SEASONS[c] for c in codes]

    def chains_for(self, K):
        return [self.chains[s] for s in self.seasons(K)]


class PosteriorResult():
    def __init__(self, candidates, lats, lons, log_likelihood, posterior,
            single, c_max_index, cpi, level, log_evidence):
        self.candidates = np.asarray(candidates, dtype=np.int64)
        self.lats = np.asarray(lats, dtype=float)
        self.lons = np.asarray(lons, dtype=float)
        self.log_likelihood = np.asarray(log_likelihood, dtype=float)
        self.posterior = np.asarray(posterior, dtype=float)
        self.single = np.asarray(single, dtype=float)
        self.c_max_index = c_max_index
        self.cpi = cpi
        self.level = level
        self.log_evidence = log_evidence

    @property
    def c_max(self):
        return int(self.candidates[self.c_max_index])


def _check_candidate(schedule, c):
    if not 0 <= c < schedule.n_transient:
        raise DriftConfigError("candidate {} is not a transient state"
                .format(c))

def absorption_cdfs(schedule, c, K):
    """(K+1) x M array: mass absorbed in each target by step k, row 0 = 0"""

    _check_candidate(schedule, c)
    n = schedule.n_transient
    M = schedule.n_targets

    f = np.zeros(n + 1 + M)
    f[c] = 1.0
    cdf = np.zeros((K + 1, M))
    for k, chain in enumerate(schedule.chains_for(K), 1):
        f = chain.transposed().dot(f)
        cdf[k] = f[n + 1:]
    return cdf

def absorption_cdf(schedule, c, b, K):
    if not 1 <= b <= schedule.n_targets:
        raise DriftConfigError("no target {} (M = {})"
                .format(b, schedule.n_targets))
    return absorption_cdfs(schedule, c, K)[:, b - 1]

def first_absorption_pmf(cdf):
    """pmf(k) = cdf(k) - cdf(k-1) along the first axis; pmf(0) = cdf(0) = 0"""

    cdf = np.asarray(cdf, dtype=float)
    if np.any(np.abs(cdf[0]) > CDF_TOL):
        raise DriftNumericalError("absorption cdf must start at 0")

    pmf = np.diff(cdf, axis=0, prepend=cdf[:1] * 0.0)
    if pmf.min() < -CDF_TOL:
        raise DriftNumericalError("absorption cdf decreases (by {:.3g})"
                .format(-pmf.min()))
    return np.clip(pmf, 0.0, None)

def _observed_mass(pmf, k, window):
    lo = max(1, k - window)
    hi = min(len(pmf) - 1, k + window)
    return pmf[lo:hi + 1].sum()

def single_likelihoods(pmfs, observations, window=0):
    """C x M log-likelihood of each observation alone; -inf for zeros.

    pmfs is C x (K+1) x M. Targets with no observation get NaN.
    """

    pmfs = np.asarray(pmfs, dtype=float)
    C, _, M = pmfs.shape
    out = np.full((C, M), np.nan)
    for obs in observations:
        if obs.steps >= pmfs.shape[1]:
            raise DriftConfigError("observation at step {} beyond horizon {}"
                    .format(obs.steps, pmfs.shape[1] - 1))
        for i in range(C):
            mass = _observed_mass(pmfs[i, :, obs.target - 1], obs.steps,
                    window)
            with np.errstate(divide='ignore'):
                out[i, obs.target - 1] = np.log(mass)
    return out

def joint_likelihood(pmfs, observations, window=0, exclude=()):
    """log L(c) = sum over observed, non-excluded targets of log pmf(k^b)"""

    single = single_likelihoods(pmfs, observations, window)
    use = [obs.target - 1 for obs in observations
            if obs.target not in set(exclude)]
    if not use:
        raise DriftConfigError("every observation is excluded")
    return single[:, use].sum(axis=1)

def _normalize_log(log_weight):
    if np.all(np.isneginf(log_weight)):
        return None, -np.inf
    evidence = logsumexp(log_weight)
    return np.exp(log_weight - evidence), evidence

def _cpi(post, lats, level):
    order = np.argsort(lats, kind='stable')
    cum = np.cumsum(post[order])
    last = len(cum) - 1
    low = min(int(np.searchsorted(cum, (1.0 - level) / 2.0)), last)
    high = min(int(np.searchsorted(cum, 1.0 - (1.0 - level) / 2.0)), last)
    return float(lats[order][low]), float(lats[order][high])

def posterior(logL, prior=None, level=DEFAULT_CPI_LEVEL, lats=None,
        lons=None, candidates=None, single=None):
    """Normalize exp(logL) * prior over the candidates.

    c_max is the first candidate (in the given order) of maximal posterior.
    The central interval takes the (1-level)/2 and 1-(1-level)/2 points of
    the posterior mass accumulated along increasing latitude.
    """

    logL = np.asarray(logL, dtype=float)
    C = len(logL)
    if not C:
        raise DriftConfigError("no candidate sources")
    if not 0.0 < level < 1.0:
        raise DriftConfigError("cpi level must lie in (0,1)")

    if prior is None:
        prior = np.full(C, 1.0 / C)
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (C,) or prior.min() < 0 or prior.sum() <= 0:
        raise DriftConfigError("prior must be {} nonnegative weights, not "\
                "all zero".format(C))
    prior = prior / prior.sum()

    with np.errstate(divide='ignore'):
        log_prior = np.log(prior)

    post, evidence = _normalize_log(logL + log_prior)
    if post is None:
        raise DriftNumericalError("zero evidence: no candidate explains the "\
                "observations")

    if lats is None:
        lats = np.arange(C, dtype=float)
    if lons is None:
        lons = np.zeros(C)
    if candidates is None:
        candidates = np.arange(C)

    single_post = np.zeros((C, 0))
    if single is not None:
        single = np.asarray(single, dtype=float)
        single_post = np.full(single.shape, np.nan)
        for b in range(single.shape[1]):
            if np.all(np.isnan(single[:, b])):
                continue
            sp, _ = _normalize_log(single[:, b] + log_prior)
            if sp is None:
                driftmc_util.console_message("target {}: zero evidence, "\
                        "single posterior undefined".format(b + 1), MOD_NAME,
                        level=logging.WARNING)
                continue
            single_post[:, b] = sp

    c_max_index = int(np.argmax(post))
    cpi = _cpi(post, np.asarray(lats, dtype=float), level)
    return PosteriorResult(candidates, lats, lons, logL, post, single_post,
            c_max_index, cpi, level, evidence)

def sticky_fit_map(schedule, c, K):
    """First-beaching probability at each sticky box s and step k.

    Returns (sticky states sorted, len(S) x K array); entry [i, k-1] is the
    mass sitting in s at step k-1 times ell(s).
    """

    _check_candidate(schedule, c)
    roles = schedule.roles
    states = np.array(sorted(roles.sticky), dtype=np.int64)
    surface = np.zeros((len(states), K))
    if not len(states):
        return states, surface
    ell = np.array([roles.sticky[s] for s in states])

    n = schedule.n_transient
    f = np.zeros(n + 1 + schedule.n_targets)
    f[c] = 1.0
    for k, chain in enumerate(schedule.chains_for(K)):
        surface[:, k] = f[states] * ell
        f = chain.transposed().dot(f)
    return states, surface

def load_observations(path, T, roles=None):
    """CSV target_label,days_since_crash,name; steps = round(days / T)"""

    try:
        frame = pd.read_csv(path, skipinitialspace=True, comment='#',
                dtype={'name': str})
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DriftConfigError("could not read observations {}: {}"
                .format(path, e))

    frame.columns = [c.strip() for c in frame.columns]
    for column in ('target_label', 'days_since_crash'):
        if column not in frame.columns:
            raise DriftConfigError("observations file {} lacks column {}"
                    .format(path, column))

    observations = []
    seen = set()
    for row_no, row in enumerate(frame.itertuples(index=False), 2):
        try:
            target = int(row.target_label)
            days = float(row.days_since_crash)
        except (TypeError, ValueError):
            raise DriftConfigError("{}:{}: bad observation".format(path,
                row_no))
        name = str(getattr(row, 'name', '')) if 'name' in frame.columns \
                else ''

        if days <= 0:
            raise DriftConfigError("{}:{}: days since crash must be positive"
                    .format(path, row_no))
        steps = int(round(days / T))
        if steps < 1:
            raise DriftConfigError("{}:{}: {} d is less than one step"
                    .format(path, row_no, days))
        if roles is not None and not 1 <= target <= roles.n_targets:
            raise DriftConfigError("{}:{}: no target {} (M = {})"
                    .format(path, row_no, target, roles.n_targets))
        if target in seen:
            raise DriftConfigError("{}:{}: second observation of target {}"
                    .format(path, row_no, target))
        seen.add(target)
        observations.append(Observation(target, days, name, steps))

    if not observations:
        raise DriftConfigError("no observations in {}".format(path))
    return observations

def load_prior(path, g, candidates):
    """CSV lon_index,lat_index,weight over the candidates; unlisted get 0"""

    try:
        frame = pd.read_csv(path, header=None, comment='#',
                names=['lon_index', 'lat_index', 'weight'])
        frame = frame.apply(pd.to_numeric, errors='raise')
    except (OSError, ValueError, pd.errors.EmptyDataError) as e:
        raise DriftConfigError("could not read prior {}: {}".format(path, e))

    position = {c: i for i, c in enumerate(candidates)}
    prior = np.zeros(len(candidates))
    ignored = 0
    for i, j, w in frame.itertuples(index=False):
        if w < 0:
            raise DriftConfigError("negative prior weight in {}".format(path))
        state = g.box_to_state(int(i), int(j))
        if state == OUT_OF_DOMAIN or state not in position:
            ignored += 1
            continue
        prior[position[state]] += w

    if ignored:
        driftmc_util.console_message("prior: {} boxes are not candidates, "\
                "ignored".format(ignored), MOD_NAME, level=logging.WARNING)
    if prior.sum() <= 0:
        raise DriftConfigError("prior {} puts no weight on any candidate"
                .format(path))
    return prior / prior.sum()

def load_schedule(config, model='nonautonomous'):
    """Schedule over the augmented chains a build wrote to config.out"""

    if model not in MODELS:
        raise DriftConfigError("unknown model: {}".format(model))

    def chain(label):
        path = os.path.join(config.out, 'A_{}.txt'.format(label))
        if not os.path.isfile(path):
            raise DriftConfigError("no augmented chain at {}; run build "\
                    "first".format(path))
        return driftmc_absorb.load_chain(path)

    if model == 'nonautonomous':
        return ChainSchedule.seasonal({s: chain(s) for s in SEASONS},
                config.crash_date)
    return ChainSchedule.constant(chain(model))

def candidates_by_latitude(g, roles):
    if not roles.candidates:
        raise DriftConfigError("roles file names no candidate sources")
    candidates = np.array(roles.candidates, dtype=np.int64)
    lons, lats = g.centers(candidates)
    order = np.argsort(lats, kind='stable')
    return candidates[order], lons[order], lats[order]

def write_posterior(path, result, M):
    with open(path, 'w') as f:
        f.write("lat,lon,logL,posterior"
                + "".join(",single_b{}".format(b) for b in range(1, M + 1))
                + "\n")
        for i in range(len(result.candidates)):
            values = [result.lats[i], result.lons[i],
                    result.log_likelihood[i], result.posterior[i]]
            values += list(result.single[i]) if result.single.size \
                    else [np.nan] * M
            f.write(",".join(driftmc_util.fmt(v) for v in values) + "\n")


def start(config):
    return DriftModuleBayes(config)

class DriftModuleBayes(DriftModuleBase):
    def __init__(self, config):
        self.description = "bayes module: crash-site posterior from "\
                "debris observations"
        self.settings = {'cpi_level': config.cpi_level,
                'window_steps': config.window_steps}
        self.config = config

        driftmc_util.console_message("loaded", MOD_NAME)

    def commands(self):
        return [('bayes', "Posterior over the candidate sources")]

    def arguments(self, command, parser):
        parser.add_argument('--model', choices=MODELS,
                default='nonautonomous', help="chain used for the inversion")
        parser.add_argument('--exclude', default=None,
                help="target labels left out of the joint likelihood")

    def cmd_bayes(self, args):
        """Posterior CSV, summary and sticky-fit map for c_max"""

        config = self.config
        config.validate(need=('roles', 'observations'))
        model = getattr(args, 'model', None) or 'nonautonomous'
        exclude = config.exclude
        if getattr(args, 'exclude', None):
            exclude = driftmc_util.parse_index_list(args.exclude)

        g = driftmc_grid.load_grid(config)
        roles = driftmc_grid.load_roles(g, config.roles)
        schedule = load_schedule(config, model)
        observations = load_observations(config.observations, schedule.T,
                roles)

        window = self.settings['window_steps']
        K = max(obs.steps for obs in observations) + window
        if config.horizon_steps:
            K = max(K, config.horizon_steps)

        candidates, lons, lats = candidates_by_latitude(g, roles)
        prior = None
        if config.prior:
            prior = load_prior(config.prior, g, candidates)

        driftmc_util.console_message("{} candidates, {} observations, "\
                "{} steps, model {}".format(len(candidates),
                    len(observations), K, model), MOD_NAME)

        with ThreadPoolExecutor(max_workers=config.threads) as executor:
            cdfs = list(executor.map(
                lambda c: absorption_cdfs(schedule, int(c), K), candidates))
        pmfs = np.stack([first_absorption_pmf(cdf) for cdf in cdfs])

        single = single_likelihoods(pmfs, observations, window)
        logL = joint_likelihood(pmfs, observations, window, exclude)
        result = posterior(logL, prior, self.settings['cpi_level'], lats,
                lons, candidates, single)

        os.makedirs(config.out, exist_ok=True)
        write_posterior(os.path.join(config.out, 'posterior.csv'), result,
                schedule.n_targets)

        i = result.c_max_index
        summary = [('model', model),
                ('observations', len(observations)),
                ('excluded', ",".join(str(b) for b in exclude) or 'none'),
                ('steps', K),
                ('c_max_state', result.c_max),
                ('c_max_lon', driftmc_util.fmt(result.lons[i])),
                ('c_max_lat', driftmc_util.fmt(result.lats[i])),
                ('c_max_posterior', driftmc_util.fmt(result.posterior[i])),
                ('cpi_level', driftmc_util.fmt(result.level)),
                ('cpi_lat_low', driftmc_util.fmt(result.cpi[0])),
                ('cpi_lat_high', driftmc_util.fmt(result.cpi[1])),
                ('log_evidence', driftmc_util.fmt(result.log_evidence))]
        with open(os.path.join(config.out, 'bayes_summary.txt'), 'w') as f:
            for key, value in summary:
                f.write("{}: {}\n".format(key, value))

        states, surface = sticky_fit_map(schedule, result.c_max, K)
        s_lons, s_lats = g.centers(states)
        with open(os.path.join(config.out, 'sticky_fit.csv'), 'w') as f:
            f.write("state,lon,lat,step,probability\n")
            for row, state in enumerate(states):
                for step in np.nonzero(surface[row])[0]:
                    f.write("{},{},{},{},{}\n".format(state,
                        driftmc_util.fmt(s_lons[row]),
                        driftmc_util.fmt(s_lats[row]), step + 1,
                        driftmc_util.fmt(surface[row, step])))

        driftmc_util.console_message("c_max = state {} at lat {:.4g}, CPI "\
                "[{:.4g}, {:.4g}]".format(result.c_max, result.lats[i],
                    result.cpi[0], result.cpi[1]), MOD_NAME)
        return 0

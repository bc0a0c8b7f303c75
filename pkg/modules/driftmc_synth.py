#!/usr/bin/env python3
# synthetic data module
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

import configparser
import json
import logging
import os
import numpy as np
import pandas as pd

import driftmc_absorb
import driftmc_bayes
import driftmc_grid
import driftmc_ulam
import driftmc_util
from driftmc_base import DriftModuleBase
from driftmc_ingest import SEASONS, SeasonCalendar
from driftmc_util import DriftConfigError

DEFAULT_SPEC_FILE = 'synth.conf'
# circulation sign and amplitude per season; S reverses the gyres
GYRE_SEASON_AMPLITUDE = {'W': 1.0, 'S': -1.0, 'SF': 0.5}
KERNEL_TOL = 1e-12
MOD_NAME = "synth"


class SyntheticSpec():
    """[synth] section of a synthetic-data spec file"""

    def __init__(self, path=None, text=None):
        config = configparser.ConfigParser()
        if text is not None:
            config.read_string(text)
            self.basedir = os.getcwd()
        else:
            path = path or DEFAULT_SPEC_FILE
            try:
                with open(path) as f:
                    config.read_file(f)
            except OSError:
                raise DriftConfigError("could not open synthetic spec: {}"
                        .format(path))
            except configparser.Error as e:
                raise DriftConfigError("bad synthetic spec {}: {}"
                        .format(path, e))
            self.basedir = os.path.dirname(os.path.abspath(path))

        if not 'synth' in config:
            raise DriftConfigError("no synth section defined in spec")
        section = config['synth']

        def number(key, default, cast=float):
            try:
                return cast(float(section.get(key, default)))
            except ValueError:
                raise DriftConfigError("param '{}' not appropriately defined "\
                        "in synthetic spec".format(key))

        def path_of(key):
            value = section.get(key, '').strip()
            if not value:
                return None
            return os.path.join(self.basedir, os.path.expanduser(value))

        self.kernel = section.get('kernel', 'gyre').strip()
        if self.kernel not in ('explicit', 'gyre'):
            raise DriftConfigError("kernel must be explicit or gyre")
        self.kernel_files = {s: path_of('kernel_' + s) for s in SEASONS}
        if self.kernel == 'explicit':
            missing = [s for s, p in self.kernel_files.items() if not p]
            if missing:
                raise DriftConfigError("explicit kernel lacks kernel_{}"
                        .format(missing[0]))

        self.gyre_strength = number('gyre_strength', 0.6)
        self.diffusion = number('diffusion', 0.1)
        self.leak = number('leak', 0.0)
        if not 0 <= self.diffusion <= 1 or not 0 <= self.leak <= 1:
            raise DriftConfigError("diffusion and leak must lie in [0,1]")

        self.n_drifters = number('n_drifters', 10, int)
        self.steps_per_drifter = number('steps_per_drifter', 100, int)
        self.lag_days = number('lag_days', 5.0)
        self.sample_days = number('sample_days', self.lag_days)
        self.start_day = number('start_day', 0.0)
        self.seed = number('seed', 0, int)
        self.horizon_steps = number('n_observations_horizon', 200, int)
        self.output = path_of('output') \
                or os.path.join(self.basedir, 'synthetic')

        source = section.get('true_source', '').strip()
        self.true_source = None
        if source:
            box = driftmc_util.parse_index_list(source)
            if len(box) != 2:
                raise DriftConfigError("true_source must be lon_index,lat_index")
            self.true_source = tuple(box)

        if self.n_drifters < 0 or self.steps_per_drifter < 1:
            raise DriftConfigError("need n_drifters >= 0, steps >= 1")
        if self.lag_days <= 0 or self.sample_days <= 0:
            raise DriftConfigError("lag_days and sample_days must be positive")
        ratio = self.lag_days / self.sample_days
        if abs(ratio - round(ratio)) > 1e-9:
            raise DriftConfigError("sample_days must divide lag_days")
        self.samples_per_step = int(round(ratio))


def check_kernel(kernel, n_states, label=''):
    """N x (N+1) row-stochastic, last column the exit probability"""
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape != (n_states, n_states + 1):
        raise DriftConfigError("kernel {} is {}, expected {}".format(label,
            kernel.shape, (n_states, n_states + 1)))
    if kernel.min() < 0:
        raise DriftConfigError("kernel {} has negative entries".format(label))
    worst = np.abs(kernel.sum(axis=1) - 1.0).max()
    if worst > KERNEL_TOL:
        raise DriftConfigError("kernel {} is not stochastic (row sum off by "\
                "{:.3g})".format(label, worst))
    return kernel

def load_kernel(path, n_states, label=''):
    try:
        kernel = pd.read_csv(path, header=None, comment='#').values
    except (OSError, ValueError, pd.errors.EmptyDataError) as e:
        raise DriftConfigError("could not read kernel {}: {}".format(path, e))
    return check_kernel(kernel, n_states, label)

def gyre_kernel(g, strength, diffusion=0.1, leak=0.0):
    """Double-gyre advection on the grid, spread bilinearly over boxes.

    The domain maps onto [0,2]x[0,1]; strength is the largest displacement
    in cells per step. Mass headed for a dry box stays put, mass leaving
    the grid exits. leak adds exit probability on the grid's edge boxes.
    """

    n = g.n_states
    kernel = np.zeros((n, n + 1))
    x = 2.0 * (g.box_lon + 0.5) / g.n_lon
    y = (g.box_lat + 0.5) / g.n_lat
    u = -np.sin(np.pi * x) * np.cos(np.pi * y)
    v = np.cos(np.pi * x) * np.sin(np.pi * y)

    for state in range(n):
        i, j = g.state_to_box(state)
        fx = i + strength * u[state]
        fy = j + strength * v[state]
        i0, j0 = int(np.floor(fx)), int(np.floor(fy))
        ax, ay = fx - i0, fy - j0

        spread = [((i0, j0), (1 - ax) * (1 - ay)), ((i0 + 1, j0), ax * (1 - ay)),
                ((i0, j0 + 1), (1 - ax) * ay), ((i0 + 1, j0 + 1), ax * ay)]
        spread = [(box, (1 - diffusion) * w) for box, w in spread]
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            spread.append(((i + di, j + dj), diffusion / 4.0))

        for (bi, bj), w in spread:
            if w == 0:
                continue
            if not (0 <= bi < g.n_lon and 0 <= bj < g.n_lat):
                kernel[state, n] += w
                continue
            target = g.box_to_state(bi, bj)
            if target == driftmc_util.OUT_OF_DOMAIN:
                target = state
            kernel[state, target] += w

        if leak and (i in (0, g.n_lon - 1) or j in (0, g.n_lat - 1)):
            kernel[state, :n] *= 1.0 - leak
            kernel[state, n] = 1.0 - kernel[state, :n].sum()

    kernel[:, n] = np.clip(1.0 - kernel[:, :n].sum(axis=1), 0.0, 1.0)
    return kernel

def seasonal_kernels(spec, g):
    if spec.kernel == 'explicit':
        return {s: load_kernel(spec.kernel_files[s], g.n_states, s)
                for s in SEASONS}
    return {s: check_kernel(gyre_kernel(g,
        spec.gyre_strength * GYRE_SEASON_AMPLITUDE[s], spec.diffusion,
        spec.leak), g.n_states, s) for s in SEASONS}

def simulate_chain(kernels, starts, steps, season_of_step, rng):
    """Walk every drifter through the seasonal kernels.

    Returns an int array (drifters x steps+1); the exit index N marks the
    step a drifter left, -1 afterwards.
    """

    starts = np.asarray(starts, dtype=np.int64)
    n = next(iter(kernels.values())).shape[0]
    cum = {s: np.cumsum(k, axis=1) for s, k in kernels.items()}
    for c in cum.values():
        c[:, -1] = 1.0

    states = np.full((len(starts), steps + 1), -1, dtype=np.int64)
    states[:, 0] = starts
    for t in range(steps):
        current = states[:, t]
        alive = (current >= 0) & (current < n)
        u = rng.random(len(starts))
        if not alive.any():
            break
        rows = cum[season_of_step[t]][current[alive]]
        states[alive, t + 1] = (rows > u[alive, None]).argmax(axis=1)
    return states

def drifter_frame(spec, g, states):
    """Trajectory rows: box centers at every sample, one outside sample at
    the exit step"""

    n = g.n_states
    lons, lats = g.centers()
    out_lat = g.lat_max + g.cell_size / 2.0

    ids, times, xs, ys = [], [], [], []
    for d, walk in enumerate(states):
        for t, state in enumerate(walk):
            if state < 0:
                break
            if state == n:
                ids.append("d{:05d}".format(d))
                times.append(spec.start_day + t * spec.lag_days)
                xs.append(xs[-1])
                ys.append(out_lat)
                break
            last = t == len(walk) - 1 or walk[t + 1] < 0
            for r in range(1 if last else spec.samples_per_step):
                ids.append("d{:05d}".format(d))
                times.append(spec.start_day + t * spec.lag_days
                        + r * spec.sample_days)
                xs.append(lons[state])
                ys.append(lats[state])

    return pd.DataFrame({'id': ids, 'time_days': times, 'lon': xs,
        'lat': ys, 'drogued': np.zeros(len(ids), dtype=np.int64)})

def sample_observations(schedule, source, horizon, rng):
    """One beaching time per target, drawn from the exact first-absorption
    pmf conditional on beaching there within the horizon"""

    cdf = driftmc_bayes.absorption_cdfs(schedule, source, horizon)
    pmf = driftmc_bayes.first_absorption_pmf(cdf)
    observations = []
    for b in range(1, schedule.n_targets + 1):
        mass = pmf[1:, b - 1]
        if mass.sum() <= 0:
            driftmc_util.console_message("target {} unreachable from the "\
                    "true source within {} steps".format(b, horizon),
                    MOD_NAME, level=logging.WARNING)
            continue
        k = int(rng.choice(horizon, p=mass / mass.sum())) + 1
        observations.append(driftmc_bayes.Observation(b, k * schedule.T,
            "synthetic_b{}".format(b), k))
    return observations

def generate(spec, config):
    """Simulate drifters and observations; returns (frame, truth dict)"""

    g = driftmc_grid.load_grid(config)
    kernels = seasonal_kernels(spec, g)
    rng = np.random.default_rng(spec.seed)
    cal = SeasonCalendar()

    codes = cal.season_codes(config.epoch, spec.start_day
            + spec.lag_days * np.arange(spec.steps_per_drifter))
    seasons = [SEASONS[c] for c in codes]
    starts = rng.integers(0, g.n_states, spec.n_drifters)
    states = simulate_chain(kernels, starts, spec.steps_per_drifter, seasons,
            rng)
    frame = drifter_frame(spec, g, states)

    truth = {'seed': spec.seed, 'lag_days': spec.lag_days,
            'n_drifters': spec.n_drifters, 'n_states': g.n_states,
            'kernel': spec.kernel, 'observations': []}
    matrices = {s: driftmc_ulam.TransitionMatrix(kernels[s][:, :-1],
        spec.lag_days, s) for s in SEASONS}

    roles = None
    if config.roles and os.path.isfile(config.roles):
        roles = driftmc_grid.load_roles(g, config.roles)

    source = None
    if spec.true_source is not None:
        source = g.box_to_state(*spec.true_source)
        if source == driftmc_util.OUT_OF_DOMAIN:
            raise DriftConfigError("true source {} is not an active box"
                    .format(spec.true_source))
    elif roles is not None and roles.candidates:
        source = roles.candidates[0]

    observations = []
    if roles is not None and roles.n_targets and source is not None:
        chains = {s: driftmc_absorb.augment(matrices[s], roles)
                for s in SEASONS}
        schedule = driftmc_bayes.ChainSchedule.seasonal(chains,
                config.crash_date)
        observations = sample_observations(schedule, source,
                spec.horizon_steps, rng)
        truth['true_source'] = {'state': int(source),
                'box': list(g.state_to_box(source))}
        truth['observations'] = [{'target': o.target, 'steps': o.steps,
            'days': o.days} for o in observations]

    return frame, truth, matrices, observations

def write_outputs(outdir, frame, truth, matrices, observations):
    os.makedirs(os.path.join(outdir, 'truth'), exist_ok=True)
    frame.to_csv(os.path.join(outdir, 'trajectories.csv'), index=False,
            float_format='%.17g')

    for season, P in matrices.items():
        driftmc_ulam.save_matrix(os.path.join(outdir, 'truth',
            'kernel_{}.txt'.format(season)), P)

    with open(os.path.join(outdir, 'truth', 'truth.json'), 'w') as f:
        json.dump(truth, f, indent=2, sort_keys=True)
        f.write("\n")

    with open(os.path.join(outdir, 'observations.csv'), 'w') as f:
        f.write("target_label,days_since_crash,name\n")
        for obs in observations:
            f.write("{},{},{}\n".format(obs.target,
                driftmc_util.fmt(obs.days), obs.name))


def start(config):
    return DriftModuleSynth(config)

class DriftModuleSynth(DriftModuleBase):
    def __init__(self, config):
        self.description = "synth module: synthetic drifters with known truth"
        self.settings = {}
        self.config = config

        driftmc_util.console_message("loaded", MOD_NAME)

    def commands(self):
        return [('synth', "Generate synthetic trajectories and observations")]

    def arguments(self, command, parser):
        parser.add_argument('spec', nargs='?', default=DEFAULT_SPEC_FILE,
                help="synthetic spec file")

    def cmd_synth(self, args):
        """Trajectory CSV, ground-truth kernels and sampled observations"""

        spec = SyntheticSpec(getattr(args, 'spec', None))
        if getattr(args, 'seed', None) is not None:
            spec.seed = args.seed

        frame, truth, matrices, observations = generate(spec, self.config)
        write_outputs(spec.output, frame, truth, matrices, observations)

        driftmc_util.console_message("{} drifters, {} samples, {} "\
                "observations written to {}".format(spec.n_drifters,
                    len(frame), len(observations), spec.output), MOD_NAME)
        return 0

#!/usr/bin/env python3
# run configuration
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
import os

import driftmc_util
from driftmc_util import DriftConfigError

DEFAULT_CONF_FILE = 'driftmc.conf'
SEASON_BLOCK_DAYS = 90
MOD_NAME = "config"


class RunConfig():
    """Everything a pipeline run needs, read from an INI file.

    Relative paths are taken relative to the config file's directory.
    Command-line flags override file values through override().
    """

    def __init__(self, path=None, text=None):
        config = configparser.ConfigParser()

        if text is not None:
            config.read_string(text)
            self.basedir = os.getcwd()
        else:
            path = path or DEFAULT_CONF_FILE
            try:
                with open(path) as f:
                    config.read_file(f)
            except OSError:
                raise DriftConfigError("could not open configuration file: {}"
                        .format(path))
            except configparser.Error as e:
                raise DriftConfigError("bad configuration file {}: {}"
                        .format(path, e))
            self.basedir = os.path.dirname(os.path.abspath(path))

        self.path = path
        self.config = config

        if not 'grid' in config:
            raise DriftConfigError("no grid section defined in config")

        self.bounds = (self._float('grid', 'lon_min'),
                self._float('grid', 'lon_max'),
                self._float('grid', 'lat_min'),
                self._float('grid', 'lat_max'))
        self.cell_size = self._float('grid', 'cell_size', 0.25)
        self.wet_mask = self._path('grid', 'wet_mask')

        self.trajectories = self._path('data', 'trajectories')
        self.roles = self._path('data', 'roles')
        self.observations = self._path('data', 'observations')
        self.prior = self._path('data', 'prior')
        self.epoch = self._str('data', 'epoch', driftmc_util.DEFAULT_EPOCH)

        self.lag_days = self._float('chain', 'lag_days', 5.0)
        self.markov_lag_days = self._float('chain', 'markov_lag_days', 1.0)
        self.markov_max_n = self._int('chain', 'markov_max_n', 10)
        self.season_exponent = self._int('chain', 'season_exponent', None)
        self.crash_date = self._str('chain', 'crash_date',
                driftmc_util.DEFAULT_EPOCH)
        self.prune_tol = self._float('chain', 'prune_tol', 1e-15)
        self.time_tolerance = self._float('chain', 'time_tolerance', 0.1)

        self.k_eigs = self._int('spectral', 'k_eigs', 2)
        self.eig_tol = self._float('spectral', 'tol', 1e-10)
        self.eig_max_iter = self._int('spectral', 'max_iter', 100000)
        self.basin_threshold = self._float('spectral', 'basin_threshold', 0.5)
        self.seed = self._int('spectral', 'seed', 0)

        self.cpi_level = self._float('bayes', 'cpi_level', 0.95)
        self.window_steps = self._int('bayes', 'window_steps', 0)
        self.horizon_steps = self._int('bayes', 'horizon_steps', None)
        self.exclude = driftmc_util.parse_index_list(
                self._str('bayes', 'exclude', ''))

        self.path_targets = driftmc_util.parse_index_list(
                self._str('paths', 'targets', ''))
        self.path_steps = self._int('paths', 'steps', None)

        self.out = self._path('output', 'directory') \
                or os.path.join(self.basedir, 'out')
        self.threads = self._int('output', 'threads', None)

    def _str(self, section, key, default=None):
        try:
            value = self.config[section][key].strip()
        except KeyError:
            return default
        return value if value else default

    def _float(self, section, key, default=...):
        value = self._str(section, key)
        if value is None:
            if default is ...:
                raise DriftConfigError("param '{}' not appropriately "\
                        "defined in config section [{}]".format(key, section))
            return default
        try:
            return float(value)
        except ValueError:
            raise DriftConfigError("param '{}' must be a number, got {}"
                    .format(key, value))

    def _int(self, section, key, default=...):
        value = self._float(section, key, default)
        return None if value is None else int(value)

    def _path(self, section, key):
        value = self._str(section, key)
        if value is None:
            return None
        return os.path.join(self.basedir, os.path.expanduser(value))

    @property
    def exponent(self):
        """Season-block exponent; 18 for the default 5-day lag"""
        if self.season_exponent:
            return self.season_exponent
        return int(round(SEASON_BLOCK_DAYS / self.lag_days))

    def override(self, args):
        """Apply command-line flags (argparse namespace) over file values"""

        mapping = {'out': 'out',
                'threads': 'threads',
                'lag_days': 'lag_days',
                'crash_date': 'crash_date',
                'cpi_level': 'cpi_level',
                'basin_threshold': 'basin_threshold',
                'window_steps': 'window_steps',
                'seed': 'seed',
                'epoch': 'epoch'}

        for flag, attr in mapping.items():
            value = getattr(args, flag, None)
            if value is None:
                continue

            if flag == 'lag_days':
                days = driftmc_util.str_to_days(value)
                if not days:
                    raise DriftConfigError("bad lag: {}".format(value))
                value = days

            setattr(self, attr, value)

    def validate(self, need=()):
        """Check the files a subcommand needs and the lag invariants"""

        for key in need:
            path = getattr(self, key)
            if not path:
                raise DriftConfigError("param '{}' not appropriately "\
                        "defined in config".format(key))
            if not os.path.isfile(path):
                raise DriftConfigError("{} file not found: {}"
                        .format(key, path))

        if self.lag_days <= 0:
            raise DriftConfigError("lag_days must be positive")

        if abs(self.exponent * self.lag_days - SEASON_BLOCK_DAYS) > 1e-9:
            raise DriftConfigError("season block of {} x {} d is not {} d"
                    .format(self.exponent, self.lag_days, SEASON_BLOCK_DAYS))

        if not 0.0 < self.cpi_level < 1.0:
            raise DriftConfigError("cpi_level must lie in (0,1)")

        if self.window_steps < 0:
            raise DriftConfigError("window_steps must be >= 0")

        driftmc_util.to_datetime64(self.crash_date)
        driftmc_util.to_datetime64(self.epoch)
        return True

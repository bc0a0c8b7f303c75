#!/usr/bin/env python3
# grid module
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

import math
import os
import numpy as np
import pandas as pd

import driftmc_util
from driftmc_util import DriftConfigError, OUT_OF_DOMAIN

DEFAULT_CELL_SIZE = 0.25
DIVISOR_TOL = 1e-9
EARTH_RADIUS_KM = 6371.0
EDGE_ULPS = 4  # 0.3 sits on the 3rd edge of a 0.1 grid though 3 * 0.1 != 0.3
MOD_NAME = "grid"
ROLE_KINDS = ('leaky', 'sticky', 'debris', 'source')


def _on_edge(x, edge):
    return np.abs(x - edge) <= EDGE_ULPS * np.spacing(
            np.maximum(np.abs(x), np.abs(edge)))


class GridCovering():
    """Longitude-latitude box covering with half-open cells.

    Active (wet) boxes are numbered 0..N-1 row by row, south to north and
    west to east within a row.
    """

    def __init__(self, lon_min, lon_max, lat_min, lat_max, cell_size, wet):
        self.lon_min = float(lon_min)
        self.lon_max = float(lon_max)
        self.lat_min = float(lat_min)
        self.lat_max = float(lat_max)
        self.cell_size = float(cell_size)
        self.n_lon = int(round((self.lon_max - self.lon_min) / self.cell_size))
        self.n_lat = int(round((self.lat_max - self.lat_min) / self.cell_size))

        wet = np.asarray(wet, dtype=bool)
        if wet.shape != (self.n_lon, self.n_lat):
            raise DriftConfigError("wet mask shape {} does not match grid {}"
                    .format(wet.shape, (self.n_lon, self.n_lat)))

        lat_idx, lon_idx = np.nonzero(wet.T)
        self.box_lon = lon_idx.astype(np.int64)
        self.box_lat = lat_idx.astype(np.int64)
        self.n_states = len(self.box_lon)

        self.state_map = np.full((self.n_lon, self.n_lat), OUT_OF_DOMAIN,
                dtype=np.int64)
        self.state_map[self.box_lon, self.box_lat] = np.arange(self.n_states)

        self.box_lon.setflags(write=False)
        self.box_lat.setflags(write=False)
        self.state_map.setflags(write=False)

    @property
    def active_boxes(self):
        return list(zip(self.box_lon.tolist(), self.box_lat.tolist()))

    def box_to_state(self, lon_index, lat_index):
        if not (0 <= lon_index < self.n_lon and 0 <= lat_index < self.n_lat):
            return OUT_OF_DOMAIN
        return int(self.state_map[lon_index, lat_index])

    def state_to_box(self, state):
        return int(self.box_lon[state]), int(self.box_lat[state])

    def normalize_lon(self, lon):
        """Wrap longitudes onto the domain convention ([0,360) or [-180,180))"""
        lon = np.asarray(lon, dtype=float)
        if self.lon_min >= 0:
            return np.mod(lon, 360.0)
        return np.mod(lon + 180.0, 360.0) - 180.0

    def _axis_index(self, x, origin, n):
        i = np.floor((x - origin) / self.cell_size)

        # the ratio can land one cell off when x is on (or a rounding step
        # from) an edge; settle it against the edges themselves
        lower = origin + i * self.cell_size
        i = np.where((x < lower) & ~_on_edge(x, lower), i - 1, i)
        upper = origin + (i + 1) * self.cell_size
        i = np.where((x >= upper) | _on_edge(x, upper), i + 1, i)

        return np.clip(i, 0, n - 1).astype(np.int64)

    def point_to_state(self, lon, lat):
        """State index of each position; OUT_OF_DOMAIN when dry or outside"""
        scalar = np.ndim(lon) == 0 and np.ndim(lat) == 0
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon, lat = np.broadcast_arrays(lon, lat)

        inside = ((lon >= self.lon_min) & (lon < self.lon_max)
                & (lat >= self.lat_min) & (lat < self.lat_max))

        out = np.full(lon.shape, OUT_OF_DOMAIN, dtype=np.int64)
        i = self._axis_index(lon[inside], self.lon_min, self.n_lon)
        j = self._axis_index(lat[inside], self.lat_min, self.n_lat)
        out[inside] = self.state_map[i, j]

        if scalar:
            return int(out[0])
        return out

    def centers(self, states=None):
        if states is None:
            states = np.arange(self.n_states)
        states = np.asarray(states, dtype=np.int64)
        lons = self.lon_min + (self.box_lon[states] + 0.5) * self.cell_size
        lats = self.lat_min + (self.box_lat[states] + 0.5) * self.cell_size
        return lons, lats

    def box_bounds(self, state):
        west = self.lon_min + self.box_lon[state] * self.cell_size
        south = self.lat_min + self.box_lat[state] * self.cell_size
        return west, south, west + self.cell_size, south + self.cell_size

    def box_area_km2(self, states=None):
        """Spherical area of each box (no normalization is applied anywhere)"""
        if states is None:
            states = np.arange(self.n_states)
        states = np.asarray(states, dtype=np.int64)
        south = np.radians(self.lat_min + self.box_lat[states] * self.cell_size)
        north = south + math.radians(self.cell_size)
        return (EARTH_RADIUS_KM ** 2 * math.radians(self.cell_size)
                * (np.sin(north) - np.sin(south)))

    def lat_centers(self):
        return self.lat_min + (np.arange(self.n_lat) + 0.5) * self.cell_size


class StateRoles():
    """Leaky, sticky (with land fraction), debris and candidate-source states"""

    def __init__(self, n_states, leaky=(), sticky=None, debris=(),
            candidates=()):
        sticky = dict(sticky or {})

        for state in list(leaky) + list(sticky) + list(candidates):
            if not 0 <= state < n_states:
                raise DriftConfigError("state {} is not an active box"
                        .format(state))

        for state, ell in sticky.items():
            if not 0.0 < ell < 1.0:
                raise DriftConfigError("land fraction of state {} must lie "\
                        "in (0,1), got {}".format(state, ell))

        debris = sorted(((int(s), int(m)) for s, m in debris),
                key=lambda tup: tup[1])
        labels = [m for _, m in debris]
        if labels != list(range(1, len(debris) + 1)):
            raise DriftConfigError("debris target labels must be exactly "\
                    "1..M, got {}".format(labels))

        for state, m in debris:
            if state not in sticky:
                raise DriftConfigError("debris box {} (target {}) is not "\
                        "sticky".format(state, m))

        if len(set(candidates)) != len(candidates):
            raise DriftConfigError("duplicate candidate-source box")

        self.n_states = n_states
        self.leaky = frozenset(int(s) for s in leaky)
        self.sticky = {int(s): float(ell) for s, ell in sticky.items()}
        self.debris = tuple(debris)
        self.candidates = tuple(int(c) for c in candidates)

    @property
    def n_targets(self):
        return len(self.debris)

    def target_state(self, m):
        """Debris box of target label m"""
        return self.debris[m - 1][0]

    def targets_of(self, state):
        return [m for s, m in self.debris if s == state]

    def debris_states(self):
        return frozenset(s for s, _ in self.debris)


def build_grid(bounds, cell_size=DEFAULT_CELL_SIZE, wet_mask=None):
    """Covering of bounds = (lon_min, lon_max, lat_min, lat_max).

    wet_mask is a wet-mask file path, a (n_lon, n_lat) boolean array, or
    None for an all-wet domain.
    """

    lon_min, lon_max, lat_min, lat_max = [float(b) for b in bounds]

    if not cell_size or cell_size <= 0:
        raise DriftConfigError("cell_size must be positive")

    if lon_max <= lon_min or lat_max <= lat_min:
        raise DriftConfigError("degenerate bounds: {}".format(bounds))

    for extent in (lon_max - lon_min, lat_max - lat_min):
        count = round(extent / cell_size)
        if count < 1 or abs(extent - count * cell_size) > DIVISOR_TOL:
            raise DriftConfigError("cell_size {} does not divide extent {}"
                    .format(cell_size, extent))

    n_lon = int(round((lon_max - lon_min) / cell_size))
    n_lat = int(round((lat_max - lat_min) / cell_size))

    if wet_mask is None:
        wet = np.ones((n_lon, n_lat), dtype=bool)
    elif isinstance(wet_mask, (str, os.PathLike)):
        wet = load_wet_mask(wet_mask, n_lon, n_lat)
    else:
        wet = np.asarray(wet_mask, dtype=bool)

    if not wet.any():
        raise DriftConfigError("wet mask is empty")

    grid = GridCovering(lon_min, lon_max, lat_min, lat_max, cell_size, wet)
    driftmc_util.console_message("{}x{} boxes of {} deg, {} wet"
            .format(n_lon, n_lat, cell_size, grid.n_states), MOD_NAME)
    return grid

def load_wet_mask(path, n_lon, n_lat):
    """Lines lon_index,lat_index,wet{0|1}; unlisted boxes are dry"""

    try:
        frame = pd.read_csv(path, header=None, comment='#',
                names=['lon_index', 'lat_index', 'wet'], dtype=str)
    except (OSError, pd.errors.EmptyDataError) as e:
        raise DriftConfigError("could not read wet mask {}: {}"
                .format(path, e))

    frame = frame.apply(pd.to_numeric, errors='coerce').dropna()
    i = frame['lon_index'].astype(np.int64).values
    j = frame['lat_index'].astype(np.int64).values
    flag = frame['wet'].astype(np.int64).values

    bad = (i < 0) | (i >= n_lon) | (j < 0) | (j >= n_lat) \
            | ((flag != 0) & (flag != 1))
    if bad.any():
        raise DriftConfigError("wet mask {} has {} invalid records"
                .format(path, int(bad.sum())))

    wet = np.zeros((n_lon, n_lat), dtype=bool)
    wet[i, j] = flag == 1

    if len(frame) < n_lon * n_lat:
        driftmc_util.console_message("wet mask lists {} of {} boxes, the "\
                "rest are dry".format(len(frame), n_lon * n_lat), MOD_NAME)
    return wet

def load_grid(config):
    """Covering from a RunConfig's [grid] section"""
    return build_grid(config.bounds, config.cell_size, config.wet_mask)

def _box_state(g, fields, line_no, path):
    try:
        lon_index, lat_index = int(fields[0]), int(fields[1])
    except (ValueError, IndexError):
        raise DriftConfigError("{}:{}: expected lon_index,lat_index"
                .format(path, line_no))

    state = g.box_to_state(lon_index, lat_index)
    if state == OUT_OF_DOMAIN:
        raise DriftConfigError("{}:{}: box ({},{}) is not an active box"
                .format(path, line_no, lon_index, lat_index))
    return state

def load_roles(g, roles_file):
    """Parse a roles file into StateRoles.

    Records (one per line, '#' comments):
        leaky: i,j
        sticky: i,j,ell
        debris: i,j,m
        source: i,j
    Source order defines the latitude ordering of the candidates.
    """

    leaky = []
    sticky = {}
    debris = []
    candidates = []

    try:
        with open(roles_file) as f:
            lines = f.readlines()
    except OSError as e:
        raise DriftConfigError("could not read roles file {}: {}"
                .format(roles_file, e))

    for line_no, raw in enumerate(lines, 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue

        try:
            kind, rest = line.split(':', 1)
        except ValueError:
            raise DriftConfigError("{}:{}: expected 'kind: values'"
                    .format(roles_file, line_no))

        kind = kind.strip().lower()
        fields = [f.strip() for f in rest.split(',')]
        if kind not in ROLE_KINDS:
            raise DriftConfigError("{}:{}: unknown record '{}'"
                    .format(roles_file, line_no, kind))

        state = _box_state(g, fields, line_no, roles_file)

        if kind == 'leaky':
            leaky.append(state)

        elif kind == 'sticky':
            try:
                sticky[state] = float(fields[2])
            except (ValueError, IndexError):
                raise DriftConfigError("{}:{}: sticky record needs ell"
                        .format(roles_file, line_no))

        elif kind == 'debris':
            try:
                debris.append((state, int(fields[2])))
            except (ValueError, IndexError):
                raise DriftConfigError("{}:{}: debris record needs target m"
                        .format(roles_file, line_no))

        else:
            candidates.append(state)

    roles = StateRoles(g.n_states, leaky, sticky, debris, candidates)
    driftmc_util.console_message("roles: {} leaky, {} sticky, M = {}, "\
            "{} candidate sources".format(len(roles.leaky),
                len(roles.sticky), roles.n_targets, len(roles.candidates)),
            MOD_NAME)
    return roles

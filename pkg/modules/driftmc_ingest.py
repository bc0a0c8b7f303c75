#!/usr/bin/env python3
# ingest module
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
from collections import OrderedDict, namedtuple
import numpy as np
import pandas as pd

import driftmc_util
from driftmc_util import DriftConfigError, OUT_OF_DOMAIN

MOD_NAME = "ingest"
REQUIRED_COLUMNS = ['id', 'time_days', 'lon', 'lat']
SEASONS = ('W', 'S', 'SF')

TrajectoryPoint = namedtuple('TrajectoryPoint',
        ['drifter_id', 'timestamp', 'lon', 'lat'])
TransitionPair = namedtuple('TransitionPair',
        ['from_state', 'to_state', 'start_date', 'season'])


class SeasonCalendar():
    """Month -> season: Jan-Mar W, Jul-Sep S, Apr-Jun and Oct-Dec SF"""

    def __init__(self, months=None):
        if months is None:
            months = {1: 'W', 2: 'W', 3: 'W',
                    4: 'SF', 5: 'SF', 6: 'SF',
                    7: 'S', 8: 'S', 9: 'S',
                    10: 'SF', 11: 'SF', 12: 'SF'}

        if sorted(months) != list(range(1, 13)):
            raise DriftConfigError("season calendar must cover months 1..12")

        for season in months.values():
            if season not in SEASONS:
                raise DriftConfigError("unknown season: {}".format(season))

        self.months = dict(months)
        self._codes = np.zeros(13, dtype=np.int8)
        for month, season in self.months.items():
            self._codes[month] = SEASONS.index(season)

    def season_codes(self, epoch, days):
        """Season code (index into SEASONS) of each day offset"""
        return self._codes[driftmc_util.month_of(epoch, days)]

    def season_of(self, epoch, day):
        return SEASONS[int(self.season_codes(epoch, [day])[0])]


class Track():
    """One drifter's samples, sorted by time"""

    def __init__(self, drifter_id, times, lons, lats):
        self.drifter_id = drifter_id
        self.times = np.asarray(times, dtype=float)
        self.lons = np.asarray(lons, dtype=float)
        self.lats = np.asarray(lats, dtype=float)

    def __len__(self):
        return len(self.times)

    @property
    def points(self):
        return [TrajectoryPoint(self.drifter_id, t, x, y)
                for t, x, y in zip(self.times, self.lons, self.lats)]


class TransitionPairs():
    """Column store of transition pairs; iterates as TransitionPair"""

    def __init__(self, from_state, to_state, start_date, season,
            drifter=None):
        self.from_state = np.asarray(from_state, dtype=np.int64)
        self.to_state = np.asarray(to_state, dtype=np.int64)
        self.start_date = np.asarray(start_date, dtype=float)
        self.season = np.asarray(season, dtype=np.int8)
        if drifter is None:
            drifter = np.zeros(len(self.from_state), dtype=np.int64)
        self.drifter = np.asarray(drifter, dtype=np.int64)

    @classmethod
    def empty(cls):
        return cls([], [], [], [])

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.from_state for p in parts]),
                np.concatenate([p.to_state for p in parts]),
                np.concatenate([p.start_date for p in parts]),
                np.concatenate([p.season for p in parts]),
                np.concatenate([p.drifter for p in parts]))

    def __len__(self):
        return len(self.from_state)

    def __iter__(self):
        for i in range(len(self)):
            yield TransitionPair(int(self.from_state[i]),
                    int(self.to_state[i]), float(self.start_date[i]),
                    SEASONS[self.season[i]])

    def subset(self, mask):
        return TransitionPairs(self.from_state[mask], self.to_state[mask],
                self.start_date[mask], self.season[mask], self.drifter[mask])


def parse_trajectories(path):
    """Read `id,time_days,lon,lat[,drogued]`; returns (tracks, report).

    Malformed rows are skipped and counted; rows flagged drogued=1 are
    dropped. Tracks come back ordered by drifter id.
    """

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False,
                skipinitialspace=True)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DriftConfigError("could not read trajectory file {}: {}"
                .format(path, e))

    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DriftConfigError("trajectory file {} lacks columns: {}"
                .format(path, ", ".join(missing)))

    total = len(frame)
    ids = frame['id'].str.strip()
    numeric = frame[['time_days', 'lon', 'lat']].apply(pd.to_numeric,
            errors='coerce')
    valid = numeric.notna().all(axis=1) & (ids != '')
    valid &= np.isfinite(numeric.fillna(np.nan).values).all(axis=1)

    drogued = 0
    if 'drogued' in frame.columns:
        flag = pd.to_numeric(frame['drogued'], errors='coerce')
        valid &= flag.isin([0, 1])
        is_drogued = valid & (flag == 1)
        drogued = int(is_drogued.sum())
        keep = valid & ~is_drogued
    else:
        keep = valid

    malformed = int(total - valid.sum())
    clean = pd.DataFrame({'id': ids[keep],
        'time_days': numeric['time_days'][keep],
        'lon': numeric['lon'][keep],
        'lat': numeric['lat'][keep]})

    if clean.empty:
        raise DriftConfigError("no valid rows in trajectory file {} "\
                "({} malformed, {} drogued)".format(path, malformed, drogued))

    clean = clean.sort_values(['id', 'time_days'], kind='mergesort')
    before = len(clean)
    clean = clean.drop_duplicates(['id', 'time_days'], keep='first')
    duplicates = before - len(clean)

    tracks = []
    for drifter_id, group in clean.groupby('id', sort=True):
        tracks.append(Track(drifter_id, group['time_days'].values,
            group['lon'].values, group['lat'].values))

    report = {'rows': total, 'valid': int(len(clean)),
            'malformed': malformed, 'drogued': drogued,
            'duplicates': int(duplicates), 'drifters': len(tracks)}

    level = logging.WARNING if malformed else logging.INFO
    driftmc_util.console_message("{} rows: {} drifters, {} samples, {} "\
            "malformed, {} drogued dropped".format(total, len(tracks),
                len(clean), malformed, drogued), MOD_NAME, level=level)
    return tracks, report

def _nearest_sample(times, targets, tolerance):
    """Index of the sample nearest each target time, -1 if none within tol"""

    pos = np.searchsorted(times, targets)
    left = np.clip(pos - 1, 0, len(times) - 1)
    right = np.clip(pos, 0, len(times) - 1)
    use_right = np.abs(times[right] - targets) < np.abs(times[left] - targets)
    best = np.where(use_right, right, left)
    best[np.abs(times[best] - targets) > tolerance] = -1
    return best

def extract_pairs(tracks, g, T, cal=None, epoch=driftmc_util.DEFAULT_EPOCH,
        tolerance=0.1):
    """Lag-T transition pairs at stride T from each drifter's first sample.

    A nominal time t0 + kT is matched to the nearest sample within
    tolerance*T; pairs join consecutive matched nominal times. Starts
    outside the domain are dropped, ends outside it get OUT_OF_DOMAIN.
    """

    if T <= 0:
        raise DriftConfigError("lag T must be positive")

    if cal is None:
        cal = SeasonCalendar()

    tol = tolerance * T
    parts = []
    for drifter_index, track in enumerate(tracks):
        if len(track) < 2:
            continue

        times = track.times
        span = times[-1] - times[0]
        nominal = times[0] + T * np.arange(int(np.floor(span / T + tolerance))
                + 1)
        idx = _nearest_sample(times, nominal, tol)

        start = idx[:-1]
        end = idx[1:]
        ok = (start >= 0) & (end >= 0)
        start, end = start[ok], end[ok]
        if not len(start):
            continue

        lons = g.normalize_lon(track.lons)
        from_state = g.point_to_state(lons[start], track.lats[start])
        to_state = g.point_to_state(lons[end], track.lats[end])

        inside = from_state != OUT_OF_DOMAIN
        if not inside.any():
            continue

        start_date = times[start][inside]
        parts.append(TransitionPairs(from_state[inside], to_state[inside],
            start_date, cal.season_codes(epoch, start_date),
            np.full(int(inside.sum()), drifter_index)))

    pairs = TransitionPairs.concatenate(parts)
    if not len(pairs):
        driftmc_util.console_message("no transition pairs at lag {} d"
                .format(T), MOD_NAME, level=logging.WARNING)
    else:
        leaving = int((pairs.to_state == OUT_OF_DOMAIN).sum())
        driftmc_util.console_message("{} pairs at lag {} d ({} leave the "\
                "domain)".format(len(pairs), T, leaving), MOD_NAME)
    return pairs

def season_split(pairs):
    """Partition pairs into OrderedDict {W, S, SF}"""

    out = OrderedDict()
    for code, season in enumerate(SEASONS):
        out[season] = pairs.subset(pairs.season == code)
    return out

def box_diagnostics(tracks, g, cal=None, epoch=driftmc_util.DEFAULT_EPOCH):
    """Per-box sample and distinct-drifter counts, overall and per season"""

    if cal is None:
        cal = SeasonCalendar()

    n = g.n_states
    samples = np.zeros(n, dtype=np.int64)
    drifters = np.zeros(n, dtype=np.int64)
    season_samples = np.zeros((len(SEASONS), n), dtype=np.int64)
    season_drifters = np.zeros((len(SEASONS), n), dtype=np.int64)

    for track in tracks:
        states = g.point_to_state(g.normalize_lon(track.lons), track.lats)
        inside = states != OUT_OF_DOMAIN
        states = states[inside]
        codes = cal.season_codes(epoch, track.times[inside])

        samples += np.bincount(states, minlength=n)
        drifters[np.unique(states)] += 1
        for code in range(len(SEASONS)):
            sel = states[codes == code]
            season_samples[code] += np.bincount(sel, minlength=n)
            season_drifters[code][np.unique(sel)] += 1

    return {'samples': samples, 'drifters': drifters,
            'season_samples': season_samples,
            'season_drifters': season_drifters}

def load_pairs(config, g, T, cal=None):
    """Parse the configured trajectory file and extract lag-T pairs"""
    tracks, report = parse_trajectories(config.trajectories)
    pairs = extract_pairs(tracks, g, T, cal, config.epoch,
            config.time_tolerance)
    return tracks, report, pairs

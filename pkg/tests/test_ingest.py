import numpy as np
import pytest

import driftmc_ingest
from driftmc_ingest import SeasonCalendar, TransitionPairs
from driftmc_util import DriftConfigError, OUT_OF_DOMAIN

EPOCH = '2014-03-08'


def test_season_calendar():
    cal = SeasonCalendar()
    assert cal.season_of(EPOCH, 0) == 'W'
    # 2014-06-30 and 2014-07-01
    assert cal.season_of(EPOCH, 114) == 'SF'
    assert cal.season_of(EPOCH, 115) == 'S'
    # 2014-10-01
    assert cal.season_of(EPOCH, 207) == 'SF'

def test_calendar_must_cover_year():
    with pytest.raises(DriftConfigError):
        SeasonCalendar({1: 'W'})

def test_parse_counts_bad_rows(write_file):
    path = write_file('traj.csv', "id,time_days,lon,lat,drogued\n"
            "a,0,0.5,0.5,0\n"
            "a,5,1.5,0.5,0\n"
            "a,5,1.7,0.5,0\n"
            "a,abc,1.5,0.5,0\n"
            "b,0,2.5,0.5,1\n"
            "b,5,3.5,0.5,0\n"
            ",5,3.5,0.5,0\n")
    tracks, report = driftmc_ingest.parse_trajectories(path)
    assert report['rows'] == 7
    assert report['malformed'] == 2
    assert report['drogued'] == 1
    assert report['duplicates'] == 1
    assert [t.drifter_id for t in tracks] == ['a', 'b']
    assert list(tracks[0].lons) == [0.5, 1.5]
    assert tracks[0].points[1].timestamp == 5.0

def test_parse_needs_columns(write_file):
    path = write_file('traj.csv', "id,time,lon,lat\na,0,0,0\n")
    with pytest.raises(DriftConfigError):
        driftmc_ingest.parse_trajectories(path)

def test_parse_no_valid_rows(write_file):
    path = write_file('traj.csv', "id,time_days,lon,lat\na,x,0,0\n")
    with pytest.raises(DriftConfigError):
        driftmc_ingest.parse_trajectories(path)

def test_pairs_and_exits(line_grid):
    track = driftmc_ingest.Track('a', [0, 5, 10], [0.5, 1.5, 7.0],
            [0.5, 0.5, 0.5])
    pairs = driftmc_ingest.extract_pairs([track], line_grid, 5.0)
    assert [(p.from_state, p.to_state) for p in pairs] == \
            [(0, 1), (1, OUT_OF_DOMAIN)]
    assert list(pairs.start_date) == [0.0, 5.0]
    assert [p.season for p in pairs] == ['W', 'W']

def test_outside_start_dropped(line_grid):
    track = driftmc_ingest.Track('a', [0, 5], [7.0, 0.5], [0.5, 0.5])
    assert len(driftmc_ingest.extract_pairs([track], line_grid, 5.0)) == 0

def test_time_tolerance(line_grid):
    close = driftmc_ingest.Track('a', [0, 5.3], [0.5, 1.5], [0.5, 0.5])
    far = driftmc_ingest.Track('b', [0, 5.6], [0.5, 1.5], [0.5, 0.5])
    assert len(driftmc_ingest.extract_pairs([close], line_grid, 5.0)) == 1
    assert len(driftmc_ingest.extract_pairs([far], line_grid, 5.0)) == 0

def test_lag_stride(line_grid):
    times = np.arange(0, 21, 1.0)
    track = driftmc_ingest.Track('a', times, np.full(21, 0.5),
            np.full(21, 0.5))
    assert len(driftmc_ingest.extract_pairs([track], line_grid, 5.0)) == 4
    assert len(driftmc_ingest.extract_pairs([track], line_grid, 1.0)) == 20

def test_season_split():
    pairs = TransitionPairs([0, 1, 2, 3], [1, 2, 3, 4], [0, 0, 0, 0],
            [0, 2, 1, 2])
    split = driftmc_ingest.season_split(pairs)
    assert list(split) == ['W', 'S', 'SF']
    assert list(split['W'].from_state) == [0]
    assert list(split['S'].from_state) == [2]
    assert list(split['SF'].from_state) == [1, 3]

def test_concatenate_empty():
    pairs = TransitionPairs.concatenate([])
    assert len(pairs) == 0

def test_box_diagnostics(line_grid):
    tracks = [driftmc_ingest.Track('a', [0, 5, 10], [0.5, 0.6, 1.5],
        [0.5, 0.5, 0.5]),
        driftmc_ingest.Track('b', [0, 200], [0.5, 2.5], [0.5, 0.5])]
    diag = driftmc_ingest.box_diagnostics(tracks, line_grid, epoch=EPOCH)
    assert list(diag['samples']) == [3, 1, 1, 0, 0]
    assert list(diag['drifters']) == [2, 1, 1, 0, 0]
    # day 200 is 2014-09-24, summer
    assert diag['season_drifters'][1][2] == 1
    assert diag['season_samples'][0][0] == 3

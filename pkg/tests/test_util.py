import numpy as np
import pytest

import driftmc_util
from driftmc_util import DriftConfigError


@pytest.mark.parametrize('text,days', [('5d', 5.0), ('2w', 14.0),
    ('1y', 360.0), ('5', 5.0), ('0.5d', 0.5)])
def test_str_to_days(text, days):
    assert driftmc_util.str_to_days(text) == days

@pytest.mark.parametrize('text', ['', 'x', '5q', '-1d', '0'])
def test_str_to_days_rejects(text):
    assert driftmc_util.str_to_days(text) is None

def test_fmt_keeps_every_digit():
    assert driftmc_util.fmt(0.1) == '0.10000000000000001'
    assert float(driftmc_util.fmt(1 / 3.0)) == 1 / 3.0

def test_month_of_crosses_month_end():
    months = driftmc_util.month_of('2014-03-08', [0, 23, 24])
    assert list(months) == [3, 3, 4]

def test_days_between_reunion_find():
    assert driftmc_util.days_between('2014-03-08', '2015-07-29') == 508

def test_bad_date():
    with pytest.raises(DriftConfigError):
        driftmc_util.to_datetime64('8 March 2014')

def test_parse_index_list():
    assert driftmc_util.parse_index_list('2, 5,7') == [2, 5, 7]
    assert driftmc_util.parse_index_list('') == []
    with pytest.raises(DriftConfigError):
        driftmc_util.parse_index_list('2,b')

#!/usr/bin/env python3
# driftmc utilities
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
import numpy as np
from time import gmtime, strftime

DAYS_PER_MODEL_YEAR = 360
DEFAULT_EPOCH = '2014-03-08'
LOGGER_NAME = 'driftmc'
OUT_OF_DOMAIN = -1

logger = logging.getLogger(LOGGER_NAME)


class DriftConfigError(Exception):
    """Bad configuration or input file (exit code 2)"""
    pass


class DriftNumericalError(Exception):
    """Numerical failure: non-convergence, zero evidence (exit code 3)"""
    pass


def setup_logging(verbose=False, quiet=False):
    if logger.handlers:
        return

    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(handler)

    if quiet:
        logger.setLevel(logging.WARNING)
    elif verbose:
        logger.setLevel(logging.DEBUG)
    else:
        logger.setLevel(logging.INFO)

def console_message(message=None, module=None, showdt=True,
        level=logging.INFO):
    line = ""

    if showdt:
        line += "[{}] ".format(gmt_pretty())

    if module:
        line += "[{}] ".format(module)

    if message is not None:
        line += "{}".format(message)

    logger.log(level, line)

def gmt_pretty():
    return strftime("%Y-%m-%d %H:%M:%S", gmtime())

def fmt(value):
    """Float text with 17 significant digits (exact round-trip)"""
    return "{:.17g}".format(float(value))

def str_to_days(strdays):
    """Convert a lag string (5d, 2w, 1y, 5) to days, 1y being 360 d"""

    if strdays is None:
        return None

    strdays = str(strdays).strip()
    if not strdays:
        return None

    try:
        if strdays[-1] == 'y':
            outdays = float(strdays[:-1]) * DAYS_PER_MODEL_YEAR
        elif strdays[-1] == 'w':
            outdays = float(strdays[:-1]) * 7
        elif strdays[-1] == 'd':
            outdays = float(strdays[:-1])
        else:
            outdays = float(strdays)
    except ValueError:
        return None

    if outdays <= 0:
        return None

    return outdays

def to_datetime64(epoch):
    try:
        return np.datetime64(str(epoch), 'D')
    except ValueError:
        raise DriftConfigError("invalid date: {} (want YYYY-MM-DD)"
                .format(epoch))

def days_to_datetime64(epoch, days):
    """Days since epoch (fractional ok) to datetime64[s], proleptic Gregorian"""
    base = to_datetime64(epoch).astype('datetime64[s]')
    seconds = np.floor(np.asarray(days, dtype=float) * 86400.0)
    return base + seconds.astype('timedelta64[s]')

def month_of(epoch, days):
    """Calendar month (1..12) of each day offset"""
    stamps = days_to_datetime64(epoch, days)
    return stamps.astype('datetime64[M]').astype(np.int64) % 12 + 1

def days_between(start, end):
    return int((to_datetime64(end) - to_datetime64(start))
            / np.timedelta64(1, 'D'))

def parse_index_list(strlist):
    """'2, 5,7' -> [2, 5, 7]"""
    if not strlist:
        return []

    out = []
    for tok in str(strlist).split(','):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(int(tok))
        except ValueError:
            raise DriftConfigError("not an integer list: {}"
                    .format(strlist))
    return out

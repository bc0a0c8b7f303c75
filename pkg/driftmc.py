#!/usr/bin/env python3
# driftmc client
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

import argparse
import logging
import os
import sys
from collections import OrderedDict
from importlib import import_module

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
MODULES = ['pipeline', 'spectral', 'bayes', 'paths', 'synth']
VERSION_STRING = "driftmc 1.0"

MODPATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'modules')
MOD_PREFIX = 'driftmc_'
sys.path.append(MODPATH)

import driftmc_config
import driftmc_util
from driftmc_util import DriftConfigError, DriftNumericalError


class DriftState():
    def __init__(self, config):
        commands = OrderedDict()
        loadedmods = OrderedDict()

        if config.threads is None:
            config.threads = os.cpu_count() or 1

        for module in MODULES:
            Mod = import_module(MOD_PREFIX + module)
            ModObj = Mod.start(config)

            for cmd, helptext in ModObj.commands():
                if cmd in commands:
                    raise DriftConfigError("attempted to register command "\
                            "twice: {}".format(cmd))
                commands[cmd] = (ModObj, helptext)

            loadedmods[module] = ModObj

        driftmc_util.console_message("loaded modules: {}"
                .format(", ".join(loadedmods)), level=logging.DEBUG)

        self.commands = commands
        self.config = config
        self.loadedmods = loadedmods


def global_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=driftmc_config.DEFAULT_CONF_FILE)
    common.add_argument('--out', default=None, help="output directory")
    common.add_argument('--threads', type=int, default=None)
    common.add_argument('--lag-days', dest='lag_days', default=None,
            help="lag T (5d, 1w, ...)")
    common.add_argument('--crash-date', dest='crash_date', default=None)
    common.add_argument('--epoch', default=None,
            help="date of trajectory time 0")
    common.add_argument('--cpi-level', dest='cpi_level', type=float,
            default=None)
    common.add_argument('--basin-threshold', dest='basin_threshold',
            type=float, default=None)
    common.add_argument('--window-steps', dest='window_steps', type=int,
            default=None)
    common.add_argument('--seed', type=int, default=None)
    common.add_argument('--verbose', action='store_true')
    common.add_argument('--quiet', action='store_true')
    return common

def build_parser(driftstate, common):
    parser = argparse.ArgumentParser(prog='driftmc',
            description=VERSION_STRING)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    for cmd, (ModObj, helptext) in driftstate.commands.items():
        cmdparser = sub.add_parser(cmd, help=helptext, parents=[common])
        ModObj.arguments(cmd, cmdparser)

    sub.add_parser('mods', help="Show available modules", parents=[common])
    sub.add_parser('settings', help="Show module settings", parents=[common])
    return parser

def cmd_mods(driftstate, args):
    """Show available modules"""

    for module, ModObj in driftstate.loadedmods.items():
        driftmc_util.console_message(module, showdt=False)
        driftmc_util.console_message('=' * len(module), showdt=False)
        ModObj.info()
        driftmc_util.console_message('', showdt=False)
    return 0

def cmd_settings(driftstate, args):
    """Show module settings"""

    for module, ModObj in driftstate.loadedmods.items():
        if not ModObj.settings:
            continue
        driftmc_util.console_message("[{}]".format(module), showdt=False)
        ModObj.setting(None)
    return 0

def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    common = global_flags()
    early, _ = common.parse_known_args(argv)
    driftmc_util.setup_logging(early.verbose, early.quiet)

    try:
        config = driftmc_config.RunConfig(early.config)
        config.override(early)
        driftstate = DriftState(config)

        args = build_parser(driftstate, common).parse_args(argv)

        if args.command == 'mods':
            return cmd_mods(driftstate, args)
        if args.command == 'settings':
            return cmd_settings(driftstate, args)

        ModObj, _ = driftstate.commands[args.command]
        return getattr(ModObj, 'cmd_' + args.command)(args) or 0

    except DriftConfigError as e:
        driftmc_util.console_message("error: {}".format(e), 'driftmc',
                level=logging.ERROR)
        return EXIT_CONFIG

    except DriftNumericalError as e:
        driftmc_util.console_message("numerical failure: {}".format(e),
                'driftmc', level=logging.ERROR)
        return EXIT_NUMERICAL

def main():
    sys.exit(run())

if __name__ == '__main__':
    main()

#!/usr/bin/env python3
# module base
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

import abc

import driftmc_util


class DriftModuleBase(metaclass=abc.ABCMeta):

    @abc.abstractmethod
    def commands(self):
        """What subcommands do we provide?"""
        return []

    def arguments(self, command, parser):
        """Add subcommand-specific flags"""
        return

    def info(self):
        """Module-specific information"""
        driftmc_util.console_message(self.description)

    def setting(self, setting, arg=None):
        """Show/override module settings"""
        if setting is None:
            for setting, state in self.settings.items():
                driftmc_util.console_message(
                        "{}: {} ({})".format(setting, state,
                            type(state).__name__), showdt=False)
            return True

        if setting not in self.settings:
            return False

        current = self.settings[setting]
        if isinstance(current, bool):
            new = not current if arg is None else bool(arg)
        elif arg is None:
            driftmc_util.console_message(
                    "non-boolean setting requires an argument")
            return False
        elif isinstance(current, int):
            try:
                new = int(arg)
            except ValueError:
                raise driftmc_util.DriftConfigError(
                        "bad argument for setting {}: {}".format(setting, arg))
        elif isinstance(current, float):
            try:
                new = float(arg)
            except ValueError:
                raise driftmc_util.DriftConfigError(
                        "bad argument for setting {}: {}".format(setting, arg))
        else:
            new = arg

        self.settings[setting] = new
        return True

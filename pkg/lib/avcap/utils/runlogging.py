# -*- coding: utf-8 -*-
#
# Copyright (C) 2015 Thomas Amland
# Copyright (c) AVCap developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

import logging
import sys

LOG_PREFIX = '[avcap] '


class ConsoleLogHandler(logging.StreamHandler):

    def __init__(self, verbose: bool = False, stream=None):
        logging.StreamHandler.__init__(self, stream if stream is not None else sys.stderr)
        self.verbose = verbose
        if self.verbose:
            formatter = logging.Formatter(LOG_PREFIX + '%(name)s %(levelname)s [%(filename)s:%(lineno)d]: %(message)s')
        else:
            formatter = logging.Formatter(LOG_PREFIX + '%(name)s: %(message)s')
        self.setFormatter(formatter)


def config(verbose: bool = False):
    logger = logging.getLogger()
    for handler in list(logger.handlers):
        if isinstance(handler, ConsoleLogHandler):
            logger.removeHandler(handler)
    logger.addHandler(ConsoleLogHandler(verbose))
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)

    logging.getLogger("numba").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)

# -*- coding: utf-8 -*-
#
# AVCap training progress reporters
#

# Copyright (c) AVCap developers
# Portions (c) Chrisism <crizizz@gmail.com>
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; version 2 of the License.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import abc
import dataclasses
import logging
import typing

from avcap.utils import io

logger = logging.getLogger(__name__)

LOSS_LOG_HEADER = 'step,lr,loss'


@dataclasses.dataclass
class StepRecord:
    step: int
    lr: float
    loss: float

    def as_csv(self) -> str:
        return '{},{!r},{!r}'.format(self.step, self.lr, self.loss)


#
# Reporters form a decorator chain: write() handles the record and forwards it to the
# decorated reporter, so one call reaches every sink.
#
class Reporter(abc.ABC):

    def __init__(self, decoratorReporter: Reporter = None):
        self.decoratorReporter = decoratorReporter

    def open(self):
        if self.decoratorReporter:
            self.decoratorReporter.open()

    def close(self):
        if self.decoratorReporter:
            self.decoratorReporter.close()

    @abc.abstractmethod
    def _write_record(self, record: StepRecord):
        pass

    def write(self, record: StepRecord):
        self._write_record(record)
        if self.decoratorReporter:
            self.decoratorReporter.write(record)

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


class LogReporter(Reporter):

    def __init__(self, every: int = 10, decoratorReporter: Reporter = None):
        self.every = max(1, every)
        super(LogReporter, self).__init__(decoratorReporter)

    def _write_record(self, record: StepRecord):
        if record.step == 1 or record.step % self.every == 0:
            logger.info('step {:5d}  lr {:.3e}  loss {:.5f}'.format(record.step, record.lr, record.loss))


class CsvReporter(Reporter):

    def __init__(self, loss_log_FN: io.FileName, decoratorReporter: Reporter = None):
        self.loss_log_FN = loss_log_FN
        super(CsvReporter, self).__init__(decoratorReporter)

    def open(self):
        logger.debug('Loss log path "{0}"'.format(self.loss_log_FN.getPath()))
        self.loss_log_FN.getDirAsFileName().makedirs()
        self.loss_log_FN.open('w')
        self.loss_log_FN.write(LOSS_LOG_HEADER + '\n')
        super(CsvReporter, self).open()

    def close(self):
        self.loss_log_FN.close()
        super(CsvReporter, self).close()

    def _write_record(self, record: StepRecord):
        self.loss_log_FN.write(record.as_csv() + '\n')


class MemoryReporter(Reporter):

    def __init__(self, decoratorReporter: Reporter = None):
        self.records: typing.List[StepRecord] = []
        super(MemoryReporter, self).__init__(decoratorReporter)

    def _write_record(self, record: StepRecord):
        self.records.append(record)


def read_loss_log(loss_log_FN: io.FileName) -> typing.List[StepRecord]:
    lines = loss_log_FN.loadFileToStr().splitlines()
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        step, lr, loss = line.split(',')
        records.append(StepRecord(step=int(step), lr=float(lr), loss=float(loss)))
    return records

# -*- coding: utf-8 -*-

# AVCap filesystem functions

# Copyright (c) AVCap developers
# Portions (c) 2016-2019 Wintermute0110 <wintermute0110@gmail.com>
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; version 2 of the License.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.
# See the GNU General Public License for more details.

# --- Module documentation ---
# Every file the package touches (manifests, run configs, vocabularies, checkpoints,
# loss logs, frame directories) is addressed through a FileName.
#
# Paths are stored with '/' separators on every platform and directory paths end in '/'.
# OSError never leaves this module: it is logged and raised again as AvcapError.
#
# FileName('/data/synth/manifest.jsonl')
#   getPath()  /data/synth/manifest.jsonl
#   getDir()   /data/synth/
#   getBase()  manifest.jsonl
#   getExt()   .jsonl
#
# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import contextlib
import errno
import fnmatch
import json
import logging
import os
import typing

from avcap.constants import AvcapError

logger = logging.getLogger(__name__)

JSON_INDENT = 1
JSON_SEPARATORS = (',', ': ')


@contextlib.contextmanager
def _os_errors(action: str, path: str):
    try:
        yield
    except OSError as ex:
        if ex.errno == errno.ENOENT:
            logger.error('{} {}: no such file or directory'.format(action, path))
        else:
            logger.exception('{} {} failed'.format(action, path))
        raise AvcapError('Cannot {} {}'.format(action, path))


class FileName(object):

    def __init__(self, path_str: str, isdir: bool = False):
        path = '' if path_str is None else str(path_str).replace('\\', '/')
        if isdir and not path.endswith('/'):
            path += '/'
        self.path_str = path
        self.is_a_dir = isdir
        self.fileHandle = None

    # --- Path parts ---
    def getPath(self) -> str:
        return self.path_str

    def getDir(self) -> str:
        return os.path.join(os.path.dirname(self.path_str.rstrip('/')), '')

    def getBase(self) -> str:
        return os.path.basename(self.path_str.rstrip('/'))

    def getExt(self) -> str:
        return os.path.splitext(self.path_str)[1]

    def isdir(self) -> bool:
        return self.is_a_dir

    def pjoin(self, path_str: str, isdir: bool = False) -> FileName:
        return FileName(os.path.join(self.path_str, path_str), isdir)

    # root + 'model.avcp'
    def __add__(self, path_str: str) -> FileName:
        return self.pjoin(path_str)

    def getDirAsFileName(self) -> FileName:
        return FileName(self.getDir(), isdir=True)

    def __str__(self):
        return self.path_str

    def __repr__(self):
        return 'FileName({!r})'.format(self.path_str)

    def __eq__(self, other):
        return isinstance(other, FileName) and other.path_str == self.path_str

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(self.path_str)

    # --- Filesystem ---
    def exists(self) -> bool:
        return os.path.exists(self.path_str)

    def makedirs(self):
        if not self.path_str:
            return
        with _os_errors('create directory', self.path_str):
            os.makedirs(self.path_str, exist_ok=True)

    def list(self) -> typing.List[str]:
        return sorted(os.listdir(self.path_str))

    # --- Streaming access, used by the loss log ---
    def open(self, flags: str, encoding: str = 'utf-8'):
        with _os_errors('open', self.path_str):
            if 'b' in flags:
                self.fileHandle = open(self.path_str, flags)
            else:
                self.fileHandle = open(self.path_str, flags, encoding=encoding, newline='')
        return self.fileHandle

    def _handle(self):
        if self.fileHandle is None:
            raise AvcapError('{} is not open'.format(self.path_str))
        return self.fileHandle

    def write(self, data):
        with _os_errors('write', self.path_str):
            self._handle().write(data)

    def close(self):
        handle, self.fileHandle = self._handle(), None
        with _os_errors('close', self.path_str):
            handle.close()

    # --- Whole-file access ---
    def loadFileToStr(self, encoding: str = 'utf-8') -> str:
        with _os_errors('read', self.path_str):
            with open(self.path_str, 'r', encoding=encoding, newline='') as f:
                return f.read()

    def saveStrToFile(self, data_str: str, encoding: str = 'utf-8'):
        with _os_errors('write', self.path_str):
            with open(self.path_str, 'w', encoding=encoding, newline='') as f:
                f.write(data_str)

    def loadFileToBytes(self) -> bytes:
        with _os_errors('read', self.path_str):
            with open(self.path_str, 'rb') as f:
                return f.read()

    def saveBytesToFile(self, data: bytes):
        with _os_errors('write', self.path_str):
            with open(self.path_str, 'wb') as f:
                f.write(data)

    def readJson(self) -> typing.Any:
        text = self.loadFileToStr()
        try:
            return json.loads(text)
        except ValueError as ex:
            logger.error('{}: {}'.format(self.path_str, ex))
            raise AvcapError('Cannot parse JSON file {}'.format(self.path_str))

    # Sorted keys with a fixed indent: the same document always gives the same bytes.
    def writeJson(self, data: typing.Any):
        text = json.dumps(data, ensure_ascii=False, sort_keys=True, indent=JSON_INDENT, separators=JSON_SEPARATORS)
        self.saveStrToFile(text + '\n')

    # Blank lines are skipped. Line numbers in errors are 1-based.
    def readJsonLines(self) -> typing.List[typing.Any]:
        entries = []
        for number, line in enumerate(self.loadFileToStr().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except ValueError:
                raise AvcapError('Cannot parse JSON line {} in {}'.format(number, self.path_str))
        return entries

    def writeJsonLines(self, entries: typing.Iterable[typing.Any]):
        self.saveStrToFile(''.join(json.dumps(e, ensure_ascii=False, sort_keys=True) + '\n' for e in entries))

    # Files of this directory matching a shell mask, in name order.
    def scanFilesInPath(self, mask: str = '*.*') -> typing.List[FileName]:
        with _os_errors('list directory', self.path_str):
            names = self.list()
        return [self.pjoin(name) for name in fnmatch.filter(names, mask)]

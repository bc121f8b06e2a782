# -*- coding: utf-8 -*-
#
# AVCap checkpoint container (.avcp).
#
# Layout:
#   b'AVCP'                       magic
#   uint32 LE                     container version
#   uint64 LE                     header length in bytes
#   header                        UTF-8 JSON {"tensors": {name: {shape, dtype, offset, trainable}},
#                                             "metadata": {...}}
#   payload                       concatenated float32 little-endian tensors, offsets relative
#                                 to the start of the payload
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import json
import logging
import struct
import typing

import numpy as np

from avcap import constants
from avcap.constants import AvcapError, ShapeError
from avcap.tensors import ModelParams
from avcap.utils import io

logger = logging.getLogger(__name__)

PAYLOAD_DTYPE = '<f4'
_PREAMBLE = struct.Struct('<4sIQ')


def encode_checkpoint(params: ModelParams, metadata: dict = None) -> bytes:
    entries = {}
    chunks = []
    offset = 0
    for name, t in params.items():
        payload = np.ascontiguousarray(t.data, dtype=PAYLOAD_DTYPE).tobytes()
        entries[name] = {
            'shape': list(t.shape),
            'dtype': 'float32',
            'offset': offset,
            'trainable': bool(t.requires_grad)
        }
        chunks.append(payload)
        offset += len(payload)
    header = json.dumps({'tensors': entries, 'metadata': metadata or {}}, sort_keys=True).encode('utf-8')
    preamble = _PREAMBLE.pack(constants.CHECKPOINT_MAGIC, constants.CHECKPOINT_VERSION, len(header))
    return preamble + header + b''.join(chunks)


def _split_container(data: bytes, source: str) -> typing.Tuple[dict, bytes]:
    if len(data) < _PREAMBLE.size:
        raise AvcapError('{} is not an AVCap checkpoint (truncated)'.format(source))
    magic, version, header_len = _PREAMBLE.unpack_from(data, 0)
    if magic != constants.CHECKPOINT_MAGIC:
        raise AvcapError('{} is not an AVCap checkpoint (bad magic)'.format(source))
    if version != constants.CHECKPOINT_VERSION:
        raise AvcapError('{} has unsupported checkpoint version {}'.format(source, version))
    start = _PREAMBLE.size
    try:
        header = json.loads(data[start:start + header_len].decode('utf-8'))
    except ValueError:
        raise AvcapError('{} has a corrupt checkpoint header'.format(source))
    return header, data[start + header_len:]


def decode_checkpoint(data: bytes, source: str = 'checkpoint') -> typing.Tuple[ModelParams, dict]:
    header, payload = _split_container(data, source)
    params = ModelParams()
    ordered = sorted(header['tensors'].items(), key=lambda kv: kv[1]['offset'])
    for name, entry in ordered:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        end = entry['offset'] + 4 * count
        if end > len(payload):
            raise AvcapError('{}: payload of "{}" is truncated'.format(source, name))
        array = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=entry['offset'])
        params.add(name, array.astype(np.float32).reshape(shape), trainable=entry['trainable'])
    return params, header.get('metadata', {})


def save_checkpoint(params: ModelParams, checkpoint_FN: io.FileName, metadata: dict = None):
    logger.debug('Saving checkpoint {} ({} tensors)'.format(checkpoint_FN.getPath(), len(params)))
    checkpoint_FN.saveBytesToFile(encode_checkpoint(params, metadata))


def load_checkpoint(checkpoint_FN: io.FileName) -> typing.Tuple[ModelParams, dict]:
    if not checkpoint_FN.exists():
        raise AvcapError('Checkpoint {} does not exist'.format(checkpoint_FN.getPath()))
    return decode_checkpoint(checkpoint_FN.loadFileToBytes(), checkpoint_FN.getPath())


def read_header(checkpoint_FN: io.FileName) -> dict:
    header, _ = _split_container(checkpoint_FN.loadFileToBytes(), checkpoint_FN.getPath())
    return header


#
# Copies tensors from a loaded checkpoint into params. Only names accepted by the filter are
# considered. With strict=True every considered parameter must be present in the checkpoint.
# A shape mismatch always raises ShapeError naming the tensor.
#
def load_into(params: ModelParams, source: ModelParams,
              name_filter: typing.Callable[[str], bool] = None, strict: bool = True) -> typing.List[str]:
    loaded = []
    for name in params.names():
        if name_filter is not None and not name_filter(name):
            continue
        if name not in source:
            if strict:
                raise ShapeError('Checkpoint is missing tensor "{}"'.format(name))
            continue
        expected, actual = params[name].shape, source[name].shape
        if expected != actual:
            raise ShapeError('Checkpoint tensor "{}" has shape {}, expected {}'.format(name, actual, expected))
        params.assign(name, source[name].data)
        loaded.append(name)
    return loaded


def shapes_compatible(params: ModelParams, source: ModelParams, names: typing.Iterable[str]) -> bool:
    return all(n in source and source[n].shape == params[n].shape for n in names)

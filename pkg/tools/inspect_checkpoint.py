#!/usr/bin/python
# -*- coding: utf-8 -*-

# Print the JSON header of an AVCap checkpoint: metadata plus name, shape and
# trainable flag of every tensor. The float payload is not read into memory.
#
# Usage: python tools/inspect_checkpoint.py runs/av/model.avcp

# --- Python standard library ---
from __future__ import unicode_literals

import pprint
import sys
import logging

# --- AVCap modules ---
from avcap import checkpoints
from avcap.constants import AvcapError
from avcap.utils import io

logger = logging.getLogger(__name__)
logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)

# --- main ----------------------------------------------------------------------------------------
if len(sys.argv) < 2:
    print('First argument must be a checkpoint file name.')
    sys.exit(1)
print('Reading header of "{}"'.format(sys.argv[1]))
try:
    header = checkpoints.read_header(io.FileName(sys.argv[1]))
except AvcapError as ex:
    logger.error('{}'.format(ex))
    sys.exit(1)
pprint.pprint(header['metadata'])
for name, info in header['tensors'].items():
    print('{:<48} {!s:<16} {}'.format(name, tuple(info['shape']), 'trainable' if info['trainable'] else 'frozen'))

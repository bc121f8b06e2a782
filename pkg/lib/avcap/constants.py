# -*- coding: utf-8 -*-
#
# AVCap constants.
#

# This file has contants that define the behaviour of the captioning pipeline.
# This module has no external dependencies.
#

# Copyright (c) AVCap developers
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
from enum import Enum


# -------------------------------------------------------------------------------------------------
# A universal error reporting exception
# This exception is raised to report errors to the command line.
# Unhandled exceptions must not raise AvcapError() so the program crashes and the traceback is
# printed.
# -------------------------------------------------------------------------------------------------
# Top-level command code looks like this
# try:
#     cmd_train(args)
# except ConfigError as E:
#     logger.error('{0}'.format(E))
#     return EXIT_CONFIG_ERROR
#
# Low-level code looks like this
# def load_manifest(manifest_FN):
#     try:
#         do_something_that_may_fail()
#     except OSError:
#         logger.exception('(OSError) Cannot read {0} file'.format(manifest_FN.getBase()))
#         raise AvcapError('Error reading file (OSError)')
#
class AvcapError(Exception):
    def __init__(self, err_str):
        self.err_str = err_str

    def __str__(self):
        return self.err_str


# Invalid run configuration or manifest. Commands exit with EXIT_CONFIG_ERROR.
class ConfigError(AvcapError):
    pass


# Shape or dimension mismatch between tensors, patches or checkpoints.
class ShapeError(AvcapError):
    pass


# Input data rejected by a frontend (sample rate, too short, bad frames, unknown ids).
class InputError(AvcapError):
    pass


# NaN/Inf produced by a tensor op, NaN loss or a failing finite-difference check.
class NumericalError(AvcapError):
    pass


# --- Exit codes ----------------------------------------------------------------------------------
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2

# --- Environment ---------------------------------------------------------------------------------
ENV_SEED = 'AVCAP_SEED'

# --- Special token ids ---------------------------------------------------------------------------
PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3

PAD_TOKEN = '[PAD]'
BOS_TOKEN = '[BOS]'
EOS_TOKEN = '[EOS]'
UNK_TOKEN = '[UNK]'

SPECIAL_TOKENS = [
    PAD_TOKEN,
    BOS_TOKEN,
    EOS_TOKEN,
    UNK_TOKEN
]

# --- Audio frontend ------------------------------------------------------------------------------
SAMPLE_RATE = 16000
LOG_FLOOR = 1e-10

# --- Video frontend ------------------------------------------------------------------------------
IMAGE_SIZE = 224
FRAME_FILE_PREFIX = 'frame_'
FRAME_EXTENSIONS = ['png', 'ppm']

# --- Numerics ------------------------------------------------------------------------------------
MASK_PENALTY = -1e9
LN_EPS = 1e-5
ADAM_EPS = 1e-8
INIT_STD = 0.02
MLP_RATIO = 4

# --- Beam search ---------------------------------------------------------------------------------
DEFAULT_BEAM = 4
DEFAULT_ALPHA = 0.6
DEFAULT_MAX_LEN = 30

# --- Checkpoints ---------------------------------------------------------------------------------
CHECKPOINT_MAGIC = b'AVCP'
CHECKPOINT_VERSION = 1
CHECKPOINT_EXTENSION = '.avcp'

CONFIG_SCHEMA_VERSION = 1

# --- Run directory file names --------------------------------------------------------------------
RUN_CHECKPOINT_FILE = 'model.avcp'
RUN_VOCAB_FILE = 'vocab.txt'
RUN_LOSS_LOG_FILE = 'loss.csv'
RUN_MANIFEST_FILE = 'run.json'
RUN_CONFIG_FILE = 'config.json'


class Modality(Enum):
    A = 'A'
    V = 'V'
    AV = 'A+V'

    def has_audio(self) -> bool:
        return self in (Modality.A, Modality.AV)

    def has_video(self) -> bool:
        return self in (Modality.V, Modality.AV)


class PoolMode(Enum):
    NONE = 'none'
    MEAN = 'mean'


class EncoderPolicy(Enum):
    SCRATCH = 'scratch'
    PRETRAINED_TRAIN = 'pretrained_train'
    PRETRAINED_FREEZE = 'pretrained_freeze'


class DecoderPolicy(Enum):
    TRAIN = 'train'
    FREEZE = 'freeze'


class FrameSelection(Enum):
    RANDOM_START = 'random_start'
    CENTER = 'center'


# --- Parameter groups ----------------------------------------------------------------------------
GROUP_AUDIO_ENCODER = 'audio_encoder'
GROUP_VIDEO_ENCODER = 'video_encoder'
GROUP_JOINT_ENCODER = 'joint_encoder'
GROUP_PROJECTION = 'projection'
GROUP_DECODER = 'decoder'
GROUP_HEAD = 'head'

ENCODER_GROUPS = [
    GROUP_AUDIO_ENCODER,
    GROUP_VIDEO_ENCODER,
    GROUP_JOINT_ENCODER
]

PARAMETER_GROUPS = [
    GROUP_AUDIO_ENCODER,
    GROUP_VIDEO_ENCODER,
    GROUP_JOINT_ENCODER,
    GROUP_PROJECTION,
    GROUP_DECODER,
    GROUP_HEAD
]

# Metric report keys, in report order.
METRIC_KEYS = [
    'bleu1',
    'bleu2',
    'bleu3',
    'bleu4',
    'rougeL',
    'cider'
]

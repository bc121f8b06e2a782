# -*- coding: utf-8 -*-
#
# AVCap video frontend: pre-extracted RGB frames -> frame stack -> video patch sequence.
#
# Frames are image files named frame_%04d.png (or .ppm) already sampled at 2 fps and already
# 224x224. n_f == 1 uses plain 2D patches, n_f > 1 uses tubelets spanning `tubelet` frames.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import typing

# --- Numerics and images ---
import numpy as np
from PIL import Image

from avcap import constants
from avcap.audio import PatchSequence
from avcap.constants import AvcapError, InputError, ShapeError, FrameSelection
from avcap.settings import FrontendConfig
from avcap.utils import io

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class FrameStack:
    # (n_f, 3, H, W), reals in [0, 1] before normalisation
    frames: np.ndarray

    @property
    def n_f(self) -> int:
        return self.frames.shape[0]


# -------------------------------------------------------------------------------------------------
# Frame files
# -------------------------------------------------------------------------------------------------
def list_frame_files(frames_dir: io.FileName) -> typing.List[io.FileName]:
    if not frames_dir.exists():
        raise InputError('Frames directory {} does not exist'.format(frames_dir.getPath()))
    files = []
    for ext in constants.FRAME_EXTENSIONS:
        files.extend(frames_dir.scanFilesInPath('{}*.{}'.format(constants.FRAME_FILE_PREFIX, ext)))
    files.sort(key=lambda f: f.getBase())
    if not files:
        raise InputError('No {}NNNN frames found in {}'.format(constants.FRAME_FILE_PREFIX, frames_dir.getPath()))
    return files


# (3, H, W) uint8
def load_frame_bytes(frame_FN: io.FileName, image_size: int = constants.IMAGE_SIZE) -> np.ndarray:
    try:
        with Image.open(frame_FN.getPath()) as img:
            rgb = np.asarray(img.convert('RGB'), dtype=np.uint8)
    except OSError:
        logger.exception('Cannot decode frame {}'.format(frame_FN.getPath()))
        raise InputError('Cannot decode frame {}'.format(frame_FN.getPath()))
    if rgb.shape[:2] != (image_size, image_size):
        raise InputError('Frame {} is {}x{}, expected {}x{}'.format(
            frame_FN.getBase(), rgb.shape[1], rgb.shape[0], image_size, image_size))
    return rgb.transpose(2, 0, 1)


# (3, H, W) reals in [0, 1]
def load_frame(frame_FN: io.FileName, image_size: int = constants.IMAGE_SIZE) -> np.ndarray:
    return load_frame_bytes(frame_FN, image_size).astype(np.float32) / 255.0


# Every frame of a directory as one (n, 3, H, W) uint8 array.
def load_clip(frames_dir: io.FileName, image_size: int = constants.IMAGE_SIZE) -> np.ndarray:
    return np.stack([load_frame_bytes(f, image_size) for f in list_frame_files(frames_dir)])


def save_frame(frame_FN: io.FileName, rgb: np.ndarray):
    # rgb: (H, W, 3) uint8
    try:
        Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(frame_FN.getPath())
    except OSError:
        logger.exception('(OSError) Cannot write {}'.format(frame_FN.getPath()))
        raise AvcapError('Cannot write frame {}'.format(frame_FN.getPath()))


def resize_nearest(rgb: np.ndarray, size: int) -> np.ndarray:
    image = Image.fromarray(np.asarray(rgb, dtype=np.uint8))
    return np.asarray(image.resize((size, size), resample=Image.NEAREST))


# -------------------------------------------------------------------------------------------------
# Selection and normalisation
# -------------------------------------------------------------------------------------------------
def select_frames(available: typing.Sequence, n_f: int, mode: FrameSelection,
                  rng: np.random.Generator = None) -> list:
    if n_f < 1:
        raise ShapeError('n_f must be >= 1, got {}'.format(n_f))
    if len(available) < n_f:
        raise InputError('Need {} frames, only {} available'.format(n_f, len(available)))
    slack = len(available) - n_f
    if mode == FrameSelection.CENTER:
        start = slack // 2
    else:
        if rng is None:
            raise InputError('random_start frame selection needs a seeded generator')
        start = int(rng.integers(0, slack + 1))
    return list(available[start:start + n_f])


def normalize_frames(fs: FrameStack, mean: typing.Sequence[float], std: typing.Sequence[float]) -> FrameStack:
    mean = np.asarray(mean, dtype=fs.frames.dtype).reshape(1, 3, 1, 1)
    std = np.asarray(std, dtype=fs.frames.dtype).reshape(1, 3, 1, 1)
    return FrameStack(frames=(fs.frames - mean) / std)


# -------------------------------------------------------------------------------------------------
# Patches
# -------------------------------------------------------------------------------------------------
#
# Patch order: temporal block outer, then row, then column. Inside a patch the values are
# flattened channel-major: (3, p, p) for the 2D path, (3, tubelet, p, p) for tubelets.
#
def patchify_video(fs: FrameStack, p: int, tubelet: int = 2) -> PatchSequence:
    n_f, C, H, W = fs.frames.shape
    if C != 3:
        raise ShapeError('Expected RGB frames, got {} channels'.format(C))
    if H % p or W % p:
        raise ShapeError('Frame size {}x{} is not divisible by patch size {}'.format(H, W, p))
    rows, cols = H // p, W // p

    if n_f == 1:
        patches = fs.frames[0].reshape(C, rows, p, cols, p).transpose(1, 3, 0, 2, 4).reshape(rows * cols, C * p * p)
        return PatchSequence(patches=patches, geometry=(rows, cols), patch_size=p, depth=1)

    if tubelet < 1 or n_f % tubelet:
        raise ShapeError('Tubelet size {} does not divide n_f={}'.format(tubelet, n_f))
    blocks = n_f // tubelet
    patches = fs.frames.reshape(blocks, tubelet, C, rows, p, cols, p) \
        .transpose(0, 3, 5, 2, 1, 4, 6) \
        .reshape(blocks * rows * cols, C * tubelet * p * p)
    return PatchSequence(patches=patches, geometry=(blocks, rows, cols), patch_size=p, depth=tubelet)


def unpatchify_video(ps: PatchSequence) -> FrameStack:
    p, C = ps.patch_size, 3
    if len(ps.geometry) == 2:
        rows, cols = ps.geometry
        frame = ps.patches.reshape(rows, cols, C, p, p).transpose(2, 0, 3, 1, 4).reshape(C, rows * p, cols * p)
        return FrameStack(frames=frame[np.newaxis])
    blocks, rows, cols = ps.geometry
    t = ps.depth
    frames = ps.patches.reshape(blocks, rows, cols, C, t, p, p) \
        .transpose(0, 4, 3, 1, 5, 2, 6) \
        .reshape(blocks * t, C, rows * p, cols * p)
    return FrameStack(frames=frames)


def video_token_count(image_size: int, p: int, n_f: int, tubelet: int = 2) -> int:
    return (image_size // p) ** 2 * max(1, n_f // tubelet)


#
# Full chain: frame directory -> selection -> [0,1] scaling -> normalisation -> patches (float32).
#
def frames_to_patches(frames_dir: io.FileName, cfg: FrontendConfig, n_f: int,
                      mode: FrameSelection = FrameSelection.CENTER,
                      rng: np.random.Generator = None) -> PatchSequence:
    selected = select_frames(list_frame_files(frames_dir), n_f, mode, rng)
    fs = FrameStack(frames=np.stack([load_frame(f, cfg.image_size) for f in selected]))
    return stack_to_patches(fs, cfg)


# Same chain over a clip already held in memory by load_clip().
def clip_to_patches(clip: np.ndarray, cfg: FrontendConfig, n_f: int,
                    mode: FrameSelection = FrameSelection.CENTER,
                    rng: np.random.Generator = None) -> PatchSequence:
    selected = np.stack(select_frames(clip, n_f, mode, rng))
    return stack_to_patches(FrameStack(frames=selected.astype(np.float32) / 255.0), cfg)


def stack_to_patches(fs: FrameStack, cfg: FrontendConfig) -> PatchSequence:
    if cfg.video_normalize:
        fs = normalize_frames(fs, cfg.video_mean, cfg.video_std)
    ps = patchify_video(fs, cfg.video_patch, cfg.tubelet)
    ps.patches = ps.patches.astype(np.float32)
    return ps

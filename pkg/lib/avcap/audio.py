# -*- coding: utf-8 -*-
#
# AVCap audio frontend: WAV waveform -> log-Mel spectrogram -> audio patch sequence.
#
# Framing has no centre padding: frames = 1 + floor((len - win) / hop). Each frame is Hann
# windowed, zero-padded to n_fft, turned into a power spectrum, mapped through an HTK mel
# filterbank and log-compressed with a floor.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import functools
import logging
import typing

# --- Numerics ---
import librosa
import numpy as np
from scipy import signal
from scipy.io import wavfile

from avcap import constants
from avcap.constants import AvcapError, InputError, ShapeError
from avcap.settings import FrontendConfig
from avcap.utils import io

logger = logging.getLogger(__name__)

# Below this per-instance deviation a spectrogram counts as constant.
MIN_INSTANCE_STD = 1e-8


# -------------------------------------------------------------------------------------------------
# Domain types
# -------------------------------------------------------------------------------------------------
@dataclasses.dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / float(self.sample_rate)


@dataclasses.dataclass
class MelSpectrogram:
    # T x F matrix
    frames: np.ndarray

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def F(self) -> int:
        return self.frames.shape[1]


#
# Ordered flattened patches of one modality. geometry is (rows, cols) for audio and 2D video,
# (blocks, rows, cols) for tubelets; patch_size/depth let the un-patchify functions invert it.
#
@dataclasses.dataclass
class PatchSequence:
    patches: np.ndarray
    geometry: typing.Tuple[int, ...]
    patch_size: int
    depth: int = 1

    @property
    def count(self) -> int:
        return self.patches.shape[0]

    @property
    def patch_dim(self) -> int:
        return self.patches.shape[1]


# -------------------------------------------------------------------------------------------------
# WAV I/O. PCM 16-bit signed little-endian mono only.
# -------------------------------------------------------------------------------------------------
def load_wav(wav_FN: io.FileName, expected_rate: int = constants.SAMPLE_RATE) -> Waveform:
    if not wav_FN.exists():
        raise InputError('Audio file {} does not exist'.format(wav_FN.getPath()))
    try:
        rate, data = wavfile.read(wav_FN.getPath())
    except (OSError, ValueError) as ex:
        logger.exception('Cannot parse WAV {}'.format(wav_FN.getPath()))
        raise InputError('Cannot read WAV file {}: {}'.format(wav_FN.getPath(), ex))

    if data.dtype != np.int16:
        raise InputError('{}: expected 16-bit PCM, got {}'.format(wav_FN.getBase(), data.dtype))
    if data.ndim != 1:
        raise InputError('{}: expected mono audio, got {} channels'.format(wav_FN.getBase(), data.shape[1]))
    if rate != expected_rate:
        raise InputError('{}: sample rate {} Hz, expected {} Hz'.format(wav_FN.getBase(), rate, expected_rate))
    if data.size == 0:
        raise InputError('{}: no samples'.format(wav_FN.getBase()))
    return Waveform(samples=data.astype(np.float64) / 32768.0, sample_rate=int(rate))


def save_wav(wav_FN: io.FileName, waveform: Waveform):
    pcm = np.round(np.clip(waveform.samples, -1.0, 1.0) * 32767.0).astype('<i2')
    try:
        wavfile.write(wav_FN.getPath(), waveform.sample_rate, pcm)
    except OSError:
        logger.exception('(OSError) Cannot write {}'.format(wav_FN.getPath()))
        raise AvcapError('Cannot write WAV file {}'.format(wav_FN.getPath()))


# -------------------------------------------------------------------------------------------------
# Spectrogram
# -------------------------------------------------------------------------------------------------
def frame_count(n_samples: int, win_length: int, hop_length: int) -> int:
    if n_samples < win_length:
        return 0
    return 1 + (n_samples - win_length) // hop_length


@functools.lru_cache(maxsize=8)
def _mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    return librosa.filters.mel(sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=fmin, fmax=fmax,
                               htk=True, norm=None, dtype=np.float64)


def compute_logmel(w: Waveform, cfg: FrontendConfig) -> MelSpectrogram:
    if w.sample_rate != cfg.sample_rate:
        raise InputError('Sample rate {} Hz does not match the configured {} Hz'.format(
            w.sample_rate, cfg.sample_rate))
    samples = np.asarray(w.samples, dtype=np.float64)
    win, hop = cfg.win_length, cfg.hop_length
    n_frames = frame_count(len(samples), win, hop)
    if n_frames == 0:
        raise InputError('Waveform of {} samples is shorter than one {}-sample window'.format(len(samples), win))

    frames = np.lib.stride_tricks.sliding_window_view(samples, win)[::hop][:n_frames]
    window = signal.get_window('hann', win, fftbins=True)
    power = np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=-1)) ** 2
    mel_fb = _mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
    energy = power @ mel_fb.T
    return MelSpectrogram(frames=np.log(np.maximum(energy, cfg.log_floor)))


def pad_or_truncate(m: MelSpectrogram, target_frames: int, pad_value: float = 0.0) -> MelSpectrogram:
    if target_frames <= 0:
        raise ShapeError('target_frames must be positive, got {}'.format(target_frames))
    if m.T >= target_frames:
        return MelSpectrogram(frames=m.frames[:target_frames].copy())
    pad = np.full((target_frames - m.T, m.F), pad_value, dtype=m.frames.dtype)
    return MelSpectrogram(frames=np.concatenate([m.frames, pad], axis=0))


def normalize(m: MelSpectrogram, mean: float, std: float) -> MelSpectrogram:
    if not std > 0:
        raise InputError('Normalisation std must be positive, got {}'.format(std))
    return MelSpectrogram(frames=(m.frames - mean) / std)


def instance_stats(m: MelSpectrogram) -> typing.Tuple[float, float]:
    mean = float(m.frames.mean())
    std = float(m.frames.std())
    return mean, (std if std >= MIN_INSTANCE_STD else 1.0)


# -------------------------------------------------------------------------------------------------
# Patches
# -------------------------------------------------------------------------------------------------
# Time-major patch order; every p x p patch flattened row-major (time rows, mel columns).
def patchify_audio(m: MelSpectrogram, p: int) -> PatchSequence:
    T, F = m.frames.shape
    if T % p or F % p:
        raise ShapeError('Spectrogram {}x{} is not divisible into {}x{} patches'.format(T, F, p, p))
    rows, cols = T // p, F // p
    patches = m.frames.reshape(rows, p, cols, p).transpose(0, 2, 1, 3).reshape(rows * cols, p * p)
    return PatchSequence(patches=patches, geometry=(rows, cols), patch_size=p)


def unpatchify_audio(ps: PatchSequence) -> MelSpectrogram:
    rows, cols = ps.geometry
    p = ps.patch_size
    if ps.count != rows * cols or ps.patch_dim != p * p:
        raise ShapeError('Patch sequence {} does not match geometry {}'.format(ps.patches.shape, ps.geometry))
    frames = ps.patches.reshape(rows, cols, p, p).transpose(0, 2, 1, 3).reshape(rows * p, cols * p)
    return MelSpectrogram(frames=frames)


#
# Full chain: waveform -> log-Mel -> normalise -> pad/truncate -> patches (float32).
#
def audio_to_patches(source: typing.Union[io.FileName, Waveform], cfg: FrontendConfig) -> PatchSequence:
    w = load_wav(source, cfg.sample_rate) if isinstance(source, io.FileName) else source
    m = compute_logmel(w, cfg)
    if cfg.norm_mean is not None:
        mean, std = cfg.norm_mean, cfg.norm_std
    else:
        mean, std = instance_stats(m)
    m = pad_or_truncate(normalize(m, mean, std), cfg.target_frames)
    ps = patchify_audio(m, cfg.audio_patch)
    ps.patches = ps.patches.astype(np.float32)
    return ps

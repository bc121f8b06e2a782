# -*- coding: utf-8 -*-
#
# AVCap synthetic corpus.
#
# Every sample pairs a pure tone with a solid-colour clip. The pitch word of the caption can only
# be recovered from the audio and the colour word only from the frames, so single-modality models
# cannot produce the full caption.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import re
import typing

import numpy as np

from avcap import audio
from avcap import constants
from avcap import datasets
from avcap import video
from avcap.audio import Waveform
from avcap.constants import ConfigError
from avcap.utils import io

logger = logging.getLogger(__name__)

# (caption word, frequency in Hz)
TONES = [
    ('low', 250.0),
    ('middle', 750.0),
    ('high', 2000.0),
    ('shrill', 5000.0)
]

# (caption word, RGB)
COLOURS = [
    ('red', (220, 40, 40)),
    ('green', (40, 180, 60)),
    ('blue', (40, 70, 220)),
    ('yellow', (230, 210, 40))
]

CAPTION_TEMPLATE = 'a {} tone with a {} screen'
CAPTION_PATTERN = re.compile(r'^a (low|middle|high|shrill) tone with a (red|green|blue|yellow) screen$')

MANIFEST_FILE = 'manifest.jsonl'
TONE_AMPLITUDE = 0.5
NOISE_LEVEL = 0.01
SOURCE_IMAGE_SIZE = 8


@dataclasses.dataclass
class SynthOptions:
    duration_s: float = 10.0
    n_frames: int = 20
    image_size: int = constants.IMAGE_SIZE
    sample_rate: int = constants.SAMPLE_RATE


def sample_id(index: int) -> str:
    return 'synth_{:04d}'.format(index)


def sample_words(index: int) -> typing.Tuple[str, str]:
    tone = TONES[index % len(TONES)][0]
    colour = COLOURS[(index // len(TONES)) % len(COLOURS)][0]
    return tone, colour


def synth_caption(index: int) -> str:
    return CAPTION_TEMPLATE.format(*sample_words(index))


def tone_waveform(frequency: float, rng: np.random.Generator, opts: SynthOptions) -> Waveform:
    t = np.arange(int(round(opts.duration_s * opts.sample_rate))) / opts.sample_rate
    phase = rng.uniform(0.0, 2.0 * np.pi)
    samples = TONE_AMPLITUDE * np.sin(2.0 * np.pi * frequency * t + phase)
    samples = samples + NOISE_LEVEL * rng.standard_normal(samples.shape)
    return Waveform(samples=samples, sample_rate=opts.sample_rate)


def colour_frame(rgb: typing.Tuple[int, int, int], image_size: int) -> np.ndarray:
    small = np.empty((SOURCE_IMAGE_SIZE, SOURCE_IMAGE_SIZE, 3), dtype=np.uint8)
    small[...] = rgb
    return video.resize_nearest(small, image_size)


#
# Writes n samples under out_dir and returns the manifest entries. Paths in the manifest are
# relative to out_dir, so the corpus can be moved as a whole.
#
def make_synth(out_dir: io.FileName, n: int, seed: int,
               opts: SynthOptions = None) -> typing.List[datasets.ManifestEntry]:
    if n < 1:
        raise ConfigError('make_synth() needs n >= 1, got {}'.format(n))
    opts = opts or SynthOptions()
    rng = np.random.default_rng(seed)

    audio_dir = out_dir.pjoin('audio', isdir=True)
    frames_root = out_dir.pjoin('frames', isdir=True)
    audio_dir.makedirs()
    frames_root.makedirs()

    relative_entries = []
    for index in range(n):
        key = sample_id(index)
        tone, colour = sample_words(index)
        frequency = dict(TONES)[tone]

        wav_name = 'audio/{}.wav'.format(key)
        audio.save_wav(out_dir.pjoin(wav_name), tone_waveform(frequency, rng, opts))

        frames_name = 'frames/{}/'.format(key)
        frames_dir = out_dir.pjoin(frames_name, isdir=True)
        frames_dir.makedirs()
        frame = colour_frame(dict(COLOURS)[colour], opts.image_size)
        for f in range(opts.n_frames):
            video.save_frame(frames_dir.pjoin('{}{:04d}.png'.format(constants.FRAME_FILE_PREFIX, f)), frame)

        relative_entries.append(datasets.ManifestEntry(
            id=key, audio_path=wav_name, frames_dir=frames_name, captions=[synth_caption(index)]))

    manifest_FN = out_dir.pjoin(MANIFEST_FILE)
    datasets.write_manifest(manifest_FN, relative_entries)
    logger.info('make_synth() wrote {} samples to {}'.format(n, out_dir.getPath()))
    return datasets.load_manifest(manifest_FN)

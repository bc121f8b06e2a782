# -*- coding: utf-8 -*-
#
# AVCap datasets: JSON lines manifests and in-memory samples.
#
# Manifest line: {"id": ..., "audio_path": ..., "frames_dir": ..., "captions": [...]}
# Relative paths are resolved against the directory of the manifest.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import os
import typing
from concurrent import futures

import numpy as np

from avcap import audio
from avcap import video
from avcap.audio import PatchSequence
from avcap.constants import AvcapError, ConfigError, FrameSelection, Modality
from avcap.settings import RunConfig
from avcap.utils import io

logger = logging.getLogger(__name__)

PREFETCH_WORKERS = 4


@dataclasses.dataclass
class ManifestEntry:
    id: str
    audio_path: typing.Optional[str] = None
    frames_dir: typing.Optional[str] = None
    captions: typing.List[str] = dataclasses.field(default_factory=list)

    @staticmethod
    def from_dict(data: dict, base_dir: str = '', line: int = 0) -> ManifestEntry:
        if not isinstance(data, dict):
            raise ConfigError('Manifest line {}: expected a JSON object'.format(line))
        unknown = sorted(set(data.keys()) - {'id', 'audio_path', 'frames_dir', 'captions'})
        if unknown:
            raise ConfigError('Manifest line {}: unknown key(s) {}'.format(line, ', '.join(unknown)))
        entry_id = data.get('id')
        if not isinstance(entry_id, str) or not entry_id:
            raise ConfigError('Manifest line {}: "id" must be a non-empty string'.format(line))
        captions = data.get('captions', [])
        if not isinstance(captions, list) or not all(isinstance(c, str) for c in captions):
            raise ConfigError('Manifest entry "{}": "captions" must be a list of strings'.format(entry_id))
        audio_path = _resolve(data.get('audio_path'), base_dir, entry_id, 'audio_path')
        frames_dir = _resolve(data.get('frames_dir'), base_dir, entry_id, 'frames_dir')
        if audio_path is None and frames_dir is None:
            raise ConfigError('Manifest entry "{}" has neither audio_path nor frames_dir'.format(entry_id))
        return ManifestEntry(id=entry_id, audio_path=audio_path, frames_dir=frames_dir, captions=list(captions))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _resolve(path: typing.Optional[str], base_dir: str, entry_id: str, key: str) -> typing.Optional[str]:
    if path is None:
        return None
    if not isinstance(path, str) or not path:
        raise ConfigError('Manifest entry "{}": "{}" must be a non-empty string'.format(entry_id, key))
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def load_manifest(manifest_FN: io.FileName) -> typing.List[ManifestEntry]:
    if not manifest_FN.exists():
        raise ConfigError('Manifest {} does not exist'.format(manifest_FN.getPath()))
    try:
        lines = manifest_FN.readJsonLines()
    except AvcapError as ex:
        raise ConfigError(str(ex))
    base_dir = manifest_FN.getDir()
    entries = [ManifestEntry.from_dict(d, base_dir, i + 1) for i, d in enumerate(lines)]
    ids = [e.id for e in entries]
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        raise ConfigError('Manifest {} repeats id(s): {}'.format(manifest_FN.getBase(), ', '.join(duplicates)))
    logger.debug('load_manifest() {} entries from {}'.format(len(entries), manifest_FN.getPath()))
    return entries


def write_manifest(manifest_FN: io.FileName, entries: typing.Iterable[ManifestEntry]):
    manifest_FN.writeJsonLines([{k: v for k, v in e.to_dict().items() if v is not None} for e in entries])


def check_modality(entries: typing.Iterable[ManifestEntry], modality: Modality, need_captions: bool = False):
    for e in entries:
        if modality.has_audio() and e.audio_path is None:
            raise ConfigError('Manifest entry "{}" has no audio_path but modality is {}'.format(e.id, modality.value))
        if modality.has_video() and e.frames_dir is None:
            raise ConfigError('Manifest entry "{}" has no frames_dir but modality is {}'.format(e.id, modality.value))
        if need_captions and not e.captions:
            raise ConfigError('Manifest entry "{}" has no captions'.format(e.id))


# -------------------------------------------------------------------------------------------------
# Samples
# -------------------------------------------------------------------------------------------------
@dataclasses.dataclass
class Sample:
    id: str
    captions: typing.List[str]
    audio: typing.Optional[PatchSequence] = None
    # (n, 3, H, W) uint8 frames of the whole clip
    clip: typing.Optional[np.ndarray] = None

    def video_patches(self, cfg: RunConfig, mode: FrameSelection, rng: np.random.Generator = None) -> PatchSequence:
        return video.clip_to_patches(self.clip, cfg.frontend, cfg.n_f, mode, rng)


def load_sample(entry: ManifestEntry, cfg: RunConfig) -> Sample:
    sample = Sample(id=entry.id, captions=list(entry.captions))
    if cfg.modality.has_audio():
        sample.audio = audio.audio_to_patches(io.FileName(entry.audio_path), cfg.frontend)
    if cfg.modality.has_video():
        sample.clip = video.load_clip(io.FileName(entry.frames_dir, isdir=True), cfg.frontend.image_size)
        if sample.clip.shape[0] < cfg.n_f:
            raise ConfigError('Entry "{}" has {} frames, n_f={}'.format(entry.id, sample.clip.shape[0], cfg.n_f))
    return sample


#
# Loads every entry through the frontends. Loading is prefetched on a thread pool; map() keeps
# the manifest order.
#
def load_dataset(entries: typing.Sequence[ManifestEntry], cfg: RunConfig,
                 workers: int = PREFETCH_WORKERS) -> typing.List[Sample]:
    check_modality(entries, cfg.modality)
    if not entries:
        return []
    with futures.ThreadPoolExecutor(max_workers=max(1, min(workers, len(entries)))) as pool:
        samples = list(pool.map(lambda e: load_sample(e, cfg), entries))
    logger.info('Loaded {} samples ({})'.format(len(samples), cfg.modality.value))
    return samples

# -*- coding: utf-8 -*-
#
# AVCap gradient check.
#
# Compares the analytic gradient of the full training loss with central finite differences on a
# tiny 64-bit model, one report line per parameter group.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import math
import typing

import numpy as np

from avcap import captions
from avcap import tensors
from avcap import training
from avcap.constants import NumericalError
from avcap.models import AVCapModel
from avcap.settings import DecoderConfig, EncoderConfig, FrontendConfig, RunConfig

logger = logging.getLogger(__name__)

STEP = 1e-5
TOLERANCE = 1e-4
# Entries whose gradients are both below this magnitude compare on an absolute scale. The
# difference quotient carries ~1e-11 of round-off, which a 1e-8 floor would turn into failures.
ERROR_FLOOR = 1e-6
ENTRIES_PER_TENSOR = 6
TINY_DIM = 8
TINY_HEADS = 2
TINY_INIT_STD = 0.2
TINY_WORDS = ['tone', 'screen', 'red', 'low']

STATUS_OK = 'ok'
STATUS_FAIL = 'FAIL'
STATUS_FROZEN = 'skipped (frozen)'


@dataclasses.dataclass
class GroupResult:
    group: str
    status: str
    max_rel_error: typing.Optional[float] = None
    worst: str = ''
    checked: int = 0

    def as_line(self) -> str:
        if self.max_rel_error is None:
            return '{:<16} {}'.format(self.group, self.status)
        return '{:<16} {:<6} max rel error {:.3e} ({} entries, worst {})'.format(
            self.group, self.status, self.max_rel_error, self.checked, self.worst)


@dataclasses.dataclass
class GradcheckReport:
    groups: typing.List[GroupResult]
    error: typing.Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(g.status != STATUS_FAIL for g in self.groups)

    def group(self, name: str) -> GroupResult:
        for g in self.groups:
            if g.group == name:
                return g
        raise KeyError(name)

    def as_text(self) -> str:
        lines = [g.as_line() for g in self.groups]
        if self.error:
            lines.append('error: {}'.format(self.error))
        lines.append('gradcheck {}'.format('PASSED' if self.passed else 'FAILED'))
        return '\n'.join(lines)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


#
# Forces the dimensions of a run configuration down to gradcheck size: D=8, two audio tokens of
# dim 4 and one video token of dim 12. Modality, layer counts, pooling and the freeze policy are
# kept from the configuration.
#
def tiny_config(cfg: RunConfig) -> RunConfig:
    tiny = cfg.copy()
    tiny.n_f = 1
    tiny.frontend = FrontendConfig(target_frames=4, n_mels=2, audio_patch=2, image_size=2, video_patch=2)
    tiny.encoder = EncoderConfig(D=TINY_DIM, L=min(cfg.encoder.L, 1), S=min(cfg.encoder.S, 1), H=TINY_HEADS,
                                 pool_mode=cfg.encoder.pool_mode,
                                 modality_embeddings=cfg.encoder.modality_embeddings,
                                 mlp_ratio=2, init_std=TINY_INIT_STD)
    if tiny.encoder.L + tiny.encoder.S < 1:
        tiny.encoder.S = 1
    tiny.decoder = DecoderConfig(layers=1, D=TINY_DIM, H=TINY_HEADS,
                                 tie_output_embedding=cfg.decoder.tie_output_embedding,
                                 max_text_len=8, mlp_ratio=2, init_std=TINY_INIT_STD)
    tiny.validate()
    return tiny


def _tiny_inputs(cfg: RunConfig, vocab: captions.Vocabulary, rng: np.random.Generator):
    # Two captions of different length so one row carries padding.
    batch = captions.pad_batch([
        captions.encode_caption(vocab, 'low tone red screen'),
        captions.encode_caption(vocab, 'red tone')])
    audio_patches = video_patches = None
    if cfg.modality.has_audio():
        audio_patches = rng.standard_normal((2, cfg.frontend.n_audio_tokens, cfg.frontend.audio_patch_dim))
    if cfg.modality.has_video():
        video_patches = rng.standard_normal((2, cfg.frontend.n_video_tokens(1), cfg.frontend.video_patch_dim(1)))
    return batch, audio_patches, video_patches


def run_gradcheck(cfg: RunConfig, seed: int = 0, entries_per_tensor: int = ENTRIES_PER_TENSOR) -> GradcheckReport:
    tiny = tiny_config(cfg)
    vocab = captions.build_vocab([' '.join(TINY_WORDS)])
    model = AVCapModel.create(tiny, vocab.size, seed=seed).astype(np.float64)
    params = model.params
    training.apply_freeze_policy(params, tiny.train.policy)
    rng = np.random.default_rng(seed)
    batch, audio_patches, video_patches = _tiny_inputs(tiny, vocab, rng)
    eps = tiny.train.label_smoothing

    def loss_value() -> float:
        with tensors.no_grad():
            loss = training.compute_loss(model, batch, audio_patches, video_patches, eps)
        return loss.item()

    try:
        loss = training.compute_loss(model, batch, audio_patches, video_patches, eps)
        grads = tensors.backward(loss, params)
    except NumericalError as ex:
        return GradcheckReport(groups=[], error='forward/backward pass: {}'.format(ex))

    results = []
    for group in params.groups():
        names = params.names_in_group(group)
        trainable = [n for n in names if params.is_trainable(n)]
        if not trainable:
            results.append(GroupResult(group=group, status=STATUS_FROZEN))
            continue
        result = GroupResult(group=group, status=STATUS_OK, max_rel_error=0.0)
        for name in trainable:
            data = params[name].data
            flat = data.reshape(-1)
            picks = rng.choice(flat.size, size=min(entries_per_tensor, flat.size), replace=False)
            for index in sorted(int(i) for i in picks):
                location = '{}[{}]'.format(name, index)
                analytic = float(grads[name].reshape(-1)[index])
                original = flat[index]
                try:
                    flat[index] = original + STEP
                    plus = loss_value()
                    flat[index] = original - STEP
                    minus = loss_value()
                except NumericalError as ex:
                    return GradcheckReport(groups=results + [result], error='{}: {}'.format(location, ex))
                finally:
                    flat[index] = original
                numeric = (plus - minus) / (2.0 * STEP)
                if not (math.isfinite(analytic) and math.isfinite(numeric)):
                    return GradcheckReport(groups=results + [result],
                                           error='non-finite gradient at {}'.format(location))
                error = relative_error(analytic, numeric)
                result.checked += 1
                if error >= result.max_rel_error:
                    result.max_rel_error, result.worst = error, location
        if result.max_rel_error >= TOLERANCE:
            result.status = STATUS_FAIL
        logger.debug('gradcheck {}: {}'.format(group, result.as_line()))
        results.append(result)
    report = GradcheckReport(groups=results)
    logger.info('gradcheck {} over {} groups'.format('passed' if report.passed else 'failed', len(results)))
    return report


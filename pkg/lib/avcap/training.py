# -*- coding: utf-8 -*-
#
# AVCap training: label-smoothed cross-entropy, warmup + cosine schedule, AdamW, freeze policies
# and the training loop.
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
from avcap import checkpoints
from avcap import constants
from avcap import report
from avcap import tensors
from avcap.constants import (AvcapError, ConfigError, NumericalError, ShapeError, DecoderPolicy,
                             EncoderPolicy, FrameSelection)
from avcap.datasets import Sample
from avcap.models import AVCapModel
from avcap.settings import FreezePolicy, TrainConfig
from avcap.tensors import Function, Tensor, ModelParams
from avcap.utils import io

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------------------------------------
# Loss
# -------------------------------------------------------------------------------------------------
class LabelSmoothedCrossEntropy(Function):
    """
    Cross-entropy against (1 - eps) on the gold id and eps / (V - 1) on every other id, averaged
    over the real (unpadded) positions of the whole batch. Reduced in float64.
    """

    def forward(self, logits, targets=None, pad_mask=None, eps=0.0):
        V = logits.shape[-1]
        x = logits.astype(np.float64)
        shifted = x - x.max(axis=-1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        smooth = eps / (V - 1) if V > 1 else 0.0
        q = np.full(x.shape, smooth, dtype=np.float64)
        np.put_along_axis(q, targets[..., np.newaxis], 1.0 - eps, axis=-1)

        self.weights = pad_mask.astype(np.float64) / pad_mask.sum()
        self.probs, self.q, self.logits_dtype = np.exp(log_probs), q, logits.dtype
        per_position = -(q * log_probs).sum(axis=-1)
        return np.asarray((per_position * self.weights).sum())

    def backward(self, grad):
        grad_logits = (self.probs - self.q) * self.weights[..., np.newaxis] * grad
        return grad_logits.astype(self.logits_dtype),


def label_smoothed_ce(logits: Tensor, targets, pad_mask, eps: float) -> Tensor:
    targets = np.asarray(targets, dtype=np.int64)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if logits.shape[:-1] != targets.shape or targets.shape != pad_mask.shape:
        raise ShapeError('Logits {} / targets {} / pad mask {} disagree'.format(
            logits.shape, targets.shape, pad_mask.shape))
    if not 0.0 <= eps < 1.0:
        raise ConfigError('Label smoothing must be in [0, 1), got {}'.format(eps))
    if not pad_mask.any():
        raise ShapeError('label_smoothed_ce() got a batch with no real positions')
    real_targets = targets[pad_mask]
    if real_targets.min() < 0 or real_targets.max() >= logits.shape[-1]:
        raise ShapeError('Target id outside the {} logits'.format(logits.shape[-1]))
    return LabelSmoothedCrossEntropy.apply(logits, targets=np.where(pad_mask, targets, 0), pad_mask=pad_mask, eps=eps)


# -------------------------------------------------------------------------------------------------
# Schedule
# -------------------------------------------------------------------------------------------------
#
# Linear warmup from 0 to peak_lr at warmup_steps, then cosine decay to 0 at total_steps.
#
def lr_at(step: int, cfg: TrainConfig) -> float:
    if not 0 <= step <= cfg.total_steps:
        raise AvcapError('Step {} outside the schedule [0, {}]'.format(step, cfg.total_steps))
    if step < cfg.warmup_steps:
        return cfg.peak_lr * (step / cfg.warmup_steps)
    span = cfg.total_steps - cfg.warmup_steps
    if span <= 0:
        return 0.0
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * (step - cfg.warmup_steps) / span))


# -------------------------------------------------------------------------------------------------
# Optimiser
# -------------------------------------------------------------------------------------------------
@dataclasses.dataclass
class AdamWState:
    step: int = 0
    m: typing.Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    v: typing.Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)


# LayerNorm parameters and biases are not decayed.
def decays(name: str) -> bool:
    parts = name.split('.')
    if parts[-1] == 'bias':
        return False
    return not (len(parts) > 1 and parts[-2].startswith('norm'))


def adamw_step(params: ModelParams, grads: typing.Dict[str, np.ndarray], state: AdamWState, lr: float,
               cfg: TrainConfig) -> AdamWState:
    trainable = params.trainable_names()
    if set(grads.keys()) != set(trainable):
        missing = sorted(set(trainable) - set(grads.keys()))
        extra = sorted(set(grads.keys()) - set(trainable))
        raise ShapeError('Gradients do not match trainable parameters (missing {}, extra {})'.format(missing, extra))

    state.step += 1
    t = state.step
    correction1 = 1.0 - cfg.beta1 ** t
    correction2 = 1.0 - cfg.beta2 ** t
    for name in trainable:
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError('Gradient of "{}" has shape {}, expected {}'.format(name, g.shape, p.shape))
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape, dtype=np.float64)
            v = np.zeros(p.shape, dtype=np.float64)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        state.m[name], state.v[name] = m, v

        value = p.data.astype(np.float64)
        if cfg.weight_decay and decays(name):
            value = value * (1.0 - lr * cfg.weight_decay)
        value = value - lr * (m / correction1) / (np.sqrt(v / correction2) + constants.ADAM_EPS)
        p.data = value.astype(p.dtype)
    return state


# -------------------------------------------------------------------------------------------------
# Freeze policies
# -------------------------------------------------------------------------------------------------
def apply_freeze_policy(params: ModelParams, policy: FreezePolicy) -> ModelParams:
    if policy.encoder_pretrained and not policy.checkpoint:
        raise ConfigError('Encoder policy "{}" needs a checkpoint path'.format(policy.encoder.value))

    encoder_trainable = policy.encoder != EncoderPolicy.PRETRAINED_FREEZE
    decoder_trainable = policy.text_decoder == DecoderPolicy.TRAIN
    for group in params.groups():
        if group in constants.ENCODER_GROUPS:
            params.set_group_trainable(group, encoder_trainable)
        elif group == constants.GROUP_DECODER:
            params.set_group_trainable(group, decoder_trainable)
        else:
            params.set_group_trainable(group, True)

    # A tied head is the token embedding.
    if constants.GROUP_HEAD not in params.groups() and 'decoder.token_embed' in params:
        params.set_trainable('decoder.token_embed', True)

    if not params.trainable_names():
        raise ConfigError('Freeze policy leaves no trainable parameters')
    logger.debug('apply_freeze_policy() {}/{} tensors trainable'.format(len(params.trainable_names()), len(params)))
    return params


#
# Initialises encoder (and compatible decoder) tensors from one of our own checkpoints.
# Projection and head always start fresh.
#
def init_from_checkpoint(model: AVCapModel, policy: FreezePolicy) -> typing.List[str]:
    source, _ = checkpoints.load_checkpoint(io.FileName(policy.checkpoint))
    params = model.params
    loaded = checkpoints.load_into(params, source, lambda n: params.group_of(n) in constants.ENCODER_GROUPS)
    decoder_names = params.names_in_group(constants.GROUP_DECODER)
    if checkpoints.shapes_compatible(params, source, decoder_names):
        loaded += checkpoints.load_into(params, source, lambda n: params.group_of(n) == constants.GROUP_DECODER)
    else:
        logger.warning('Checkpoint {} has no compatible decoder; decoder starts fresh'.format(policy.checkpoint))
    logger.info('Initialised {} tensors from {}'.format(len(loaded), policy.checkpoint))
    return loaded


# -------------------------------------------------------------------------------------------------
# Training loop
# -------------------------------------------------------------------------------------------------
@dataclasses.dataclass
class TrainResult:
    steps: int
    final_loss: typing.Optional[float]
    losses: typing.List[float]


class BatchStream(object):
    """
    Endless sequence of item indices: a fresh seeded permutation per epoch, consumed in order.
    """

    def __init__(self, n_items: int, rng: np.random.Generator):
        self.n_items = n_items
        self.rng = rng
        self.order = []

    def next_batch(self, batch_size: int) -> typing.List[int]:
        batch = []
        while len(batch) < batch_size:
            if not self.order:
                self.order = self.rng.permutation(self.n_items).tolist()
            batch.append(self.order.pop(0))
        return batch


def training_items(samples: typing.Sequence[Sample]) -> typing.List[typing.Tuple[int, str]]:
    return [(i, c) for i, s in enumerate(samples) for c in s.captions]


def make_batch(model: AVCapModel, samples: typing.Sequence[Sample], items: typing.Sequence[typing.Tuple[int, str]],
               vocab: captions.Vocabulary, rng: np.random.Generator, mode: FrameSelection):
    cfg = model.cfg
    batch = captions.pad_batch([captions.encode_caption(vocab, c) for _, c in items])
    audio_patches = video_patches = None
    if cfg.modality.has_audio():
        audio_patches = np.stack([samples[i].audio.patches for i, _ in items])
    if cfg.modality.has_video():
        video_patches = np.stack([samples[i].video_patches(cfg, mode, rng).patches for i, _ in items])
    return batch, audio_patches, video_patches


def compute_loss(model: AVCapModel, batch: captions.TokenBatch, audio_patches, video_patches,
                 label_smoothing: float) -> Tensor:
    logits = model.forward(batch, audio_patches, video_patches)
    return label_smoothed_ce(logits, batch.target_ids, batch.pad_mask, label_smoothing)


def run_manifest(model: AVCapModel, result: TrainResult) -> dict:
    return {
        'config': model.cfg.to_dict(),
        'seed': model.cfg.train.seed,
        'final_step': result.steps,
        'final_loss': result.final_loss,
        'vocab_size': model.vocab_size
    }


def train_loop(samples: typing.Sequence[Sample], model: AVCapModel, vocab: captions.Vocabulary,
               run_dir: io.FileName, reporter: report.Reporter = None) -> TrainResult:
    cfg = model.cfg
    tcfg = cfg.train
    items = training_items(samples)
    if not items:
        raise ConfigError('Training needs at least one captioned sample')
    for _, caption in items:
        if len(captions.encode_caption(vocab, caption)) > cfg.decoder.max_text_len:
            raise ConfigError('Caption "{}" is longer than decoder.max_text_len={}'.format(
                caption, cfg.decoder.max_text_len))

    apply_freeze_policy(model.params, tcfg.policy)
    rng = np.random.default_rng(tcfg.seed)
    stream = BatchStream(len(items), rng)
    state = AdamWState()
    losses = []

    run_dir.makedirs()
    loss_reporter = report.CsvReporter(run_dir.pjoin(constants.RUN_LOSS_LOG_FILE), reporter or report.LogReporter())
    logger.info('Training {} steps on {} items ({} tensors trainable)'.format(
        tcfg.total_steps, len(items), len(model.params.trainable_names())))
    with loss_reporter:
        for step in range(1, tcfg.total_steps + 1):
            batch_items = [items[i] for i in stream.next_batch(tcfg.batch_size)]
            batch, audio_patches, video_patches = make_batch(
                model, samples, batch_items, vocab, rng, FrameSelection.RANDOM_START)
            try:
                loss = compute_loss(model, batch, audio_patches, video_patches, tcfg.label_smoothing)
            except NumericalError as ex:
                raise NumericalError('Training aborted at step {}: {}'.format(step, ex))
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise NumericalError('Training aborted at step {}: loss is {}'.format(step, loss_value))

            grads = tensors.backward(loss, model.params)
            # Step n takes the schedule at n - 1: the last update still has lr > 0.
            lr = lr_at(step - 1, tcfg)
            adamw_step(model.params, grads, state, lr, tcfg)
            losses.append(loss_value)
            loss_reporter.write(report.StepRecord(step=step, lr=lr, loss=loss_value))

    result = TrainResult(steps=tcfg.total_steps, final_loss=losses[-1] if losses else None, losses=losses)
    checkpoints.save_checkpoint(model.params, run_dir.pjoin(constants.RUN_CHECKPOINT_FILE), model.metadata())
    run_dir.pjoin(constants.RUN_MANIFEST_FILE).writeJson(run_manifest(model, result))
    logger.info('Training finished: {} steps, final loss {}'.format(result.steps, result.final_loss))
    return result

# -*- coding: utf-8 -*-
#
# AVCap audio-visual encoder.
#
# Modality-specific stacks (L layers each):
#   h_0 = patches @ E + E_pos
#   h_l = pre-norm transformer layer(h_{l-1})
#   h   = LN(h_L)                  pool_mode none: one output per token
#   h   = LN(mean_tokens(h_L))     pool_mode mean: one output per modality
# Joint stack (S layers): z_0 = Concat(h_a, h_v) [+ modality embeddings], z_av = LN(z_S).
#
# Parameter groups: audio_encoder, video_encoder, joint_encoder. Only the modalities a run uses
# get parameters.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import typing

import numpy as np

from avcap import blocks
from avcap import constants
from avcap import tensors
from avcap.constants import ShapeError, PoolMode
from avcap.settings import EncoderConfig
from avcap.tensors import Tensor, ModelParams

logger = logging.getLogger(__name__)

AUDIO = constants.GROUP_AUDIO_ENCODER
VIDEO = constants.GROUP_VIDEO_ENCODER
JOINT = constants.GROUP_JOINT_ENCODER


@dataclasses.dataclass
class AVFeature:
    # (B, n_audio + n_video, D); audio tokens first
    tokens: Tensor
    n_audio: int
    n_video: int

    @property
    def count(self) -> int:
        return self.n_audio + self.n_video


# -------------------------------------------------------------------------------------------------
# Parameters
# -------------------------------------------------------------------------------------------------
def init_modality_params(params: ModelParams, prefix: str, n_tokens: int, patch_dim: int,
                         cfg: EncoderConfig, rng: np.random.Generator):
    params.add('{}.patch_embed.weight'.format(prefix),
               tensors.truncated_normal(rng, (patch_dim, cfg.D), cfg.init_std))
    params.add('{}.pos_embed'.format(prefix), tensors.truncated_normal(rng, (n_tokens, cfg.D), cfg.init_std))
    for i in range(cfg.L):
        blocks.init_transformer_layer(params, '{}.layers.{}'.format(prefix, i), cfg.D, rng, cfg.mlp_ratio, cfg.init_std)
    blocks.init_layer_norm(params, '{}.norm'.format(prefix), cfg.D)


def init_joint_params(params: ModelParams, cfg: EncoderConfig, rng: np.random.Generator,
                      has_audio: bool, has_video: bool):
    for i in range(cfg.S):
        blocks.init_transformer_layer(params, '{}.layers.{}'.format(JOINT, i), cfg.D, rng, cfg.mlp_ratio, cfg.init_std)
    blocks.init_layer_norm(params, '{}.norm'.format(JOINT), cfg.D)
    if cfg.modality_embeddings:
        if has_audio:
            params.add('{}.audio_type'.format(JOINT), tensors.truncated_normal(rng, (cfg.D,), cfg.init_std))
        if has_video:
            params.add('{}.video_type'.format(JOINT), tensors.truncated_normal(rng, (cfg.D,), cfg.init_std))


def init_encoder_params(params: ModelParams, cfg: EncoderConfig, rng: np.random.Generator,
                        audio_geometry: typing.Optional[typing.Tuple[int, int]],
                        video_geometry: typing.Optional[typing.Tuple[int, int]]):
    """
    Creates the encoder parameters. A geometry is (token count, patch dim), or None when the
    modality is not used.
    """
    if audio_geometry is not None:
        init_modality_params(params, AUDIO, audio_geometry[0], audio_geometry[1], cfg, rng)
    if video_geometry is not None:
        init_modality_params(params, VIDEO, video_geometry[0], video_geometry[1], cfg, rng)
    init_joint_params(params, cfg, rng, audio_geometry is not None, video_geometry is not None)


# -------------------------------------------------------------------------------------------------
# Forward
# -------------------------------------------------------------------------------------------------
def embed_patches(patches: Tensor, proj: Tensor, pos: Tensor) -> Tensor:
    N, P = patches.shape[-2], patches.shape[-1]
    if proj.ndim != 2 or proj.shape[0] != P:
        raise ShapeError('Patch projection {} does not accept patches of dim {}'.format(proj.shape, P))
    if pos.shape != (N, proj.shape[1]):
        raise ShapeError('Positional embedding {} does not match {} tokens of dim {}'.format(
            pos.shape, N, proj.shape[1]))
    return tensors.matmul(patches, proj) + pos


def encoder_layer(h: Tensor, params: ModelParams, prefix: str, cfg: EncoderConfig) -> Tensor:
    return blocks.transformer_layer(h, params, prefix, cfg.H, mask=None, eps=cfg.ln_eps)


def encode_modality(patches: Tensor, params: ModelParams, prefix: str, cfg: EncoderConfig) -> Tensor:
    h = embed_patches(patches, params['{}.patch_embed.weight'.format(prefix)], params['{}.pos_embed'.format(prefix)])
    for i in range(cfg.L):
        h = encoder_layer(h, params, '{}.layers.{}'.format(prefix, i), cfg)
    if cfg.pool_mode == PoolMode.MEAN:
        h = h.mean(axis=-2, keepdims=True)
    return blocks.apply_layer_norm(h, params, '{}.norm'.format(prefix), cfg.ln_eps)


def joint_encode(h_a: typing.Optional[Tensor], h_v: typing.Optional[Tensor], params: ModelParams,
                 cfg: EncoderConfig) -> AVFeature:
    parts = []
    n_audio = n_video = 0
    if h_a is not None:
        if cfg.modality_embeddings:
            h_a = h_a + params['{}.audio_type'.format(JOINT)]
        parts.append(h_a)
        n_audio = h_a.shape[-2]
    if h_v is not None:
        if cfg.modality_embeddings:
            h_v = h_v + params['{}.video_type'.format(JOINT)]
        parts.append(h_v)
        n_video = h_v.shape[-2]
    if not parts:
        raise ShapeError('joint_encode() needs at least one modality')
    if len(parts) == 2 and h_a.shape[-1] != h_v.shape[-1]:
        raise ShapeError('Audio width {} and video width {} differ'.format(h_a.shape[-1], h_v.shape[-1]))

    z = tensors.concat(parts, axis=-2) if len(parts) == 2 else parts[0]
    for i in range(cfg.S):
        z = encoder_layer(z, params, '{}.layers.{}'.format(JOINT, i), cfg)
    z = blocks.apply_layer_norm(z, params, '{}.norm'.format(JOINT), cfg.ln_eps)
    return AVFeature(tokens=z, n_audio=n_audio, n_video=n_video)


#
# Patches come batched as (B, N, patch_dim) arrays or tensors; None skips the modality.
#
def encode_av(params: ModelParams, cfg: EncoderConfig, audio_patches=None, video_patches=None) -> AVFeature:
    h_a = h_v = None
    if audio_patches is not None:
        h_a = encode_modality(_as_tensor(audio_patches, params), params, AUDIO, cfg)
    if video_patches is not None:
        h_v = encode_modality(_as_tensor(video_patches, params), params, VIDEO, cfg)
    return joint_encode(h_a, h_v, params, cfg)


def _as_tensor(data, params: ModelParams) -> Tensor:
    if isinstance(data, Tensor):
        return data
    return Tensor(np.asarray(data, dtype=params.dtype))

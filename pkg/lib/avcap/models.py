# -*- coding: utf-8 -*-
#
# AVCap model: parameter store plus the encode -> project -> decode -> logits composition.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import logging
import typing

import numpy as np

from avcap import constants
from avcap import decoders
from avcap import encoders
from avcap import tensors
from avcap.captions import TokenBatch
from avcap.constants import ConfigError, ShapeError
from avcap.encoders import AVFeature
from avcap.settings import RunConfig
from avcap.tensors import Tensor, ModelParams

logger = logging.getLogger(__name__)


def audio_geometry(cfg: RunConfig) -> typing.Optional[typing.Tuple[int, int]]:
    if not cfg.modality.has_audio():
        return None
    return cfg.frontend.n_audio_tokens, cfg.frontend.audio_patch_dim


def video_geometry(cfg: RunConfig) -> typing.Optional[typing.Tuple[int, int]]:
    if not cfg.modality.has_video():
        return None
    return cfg.frontend.n_video_tokens(cfg.n_f), cfg.frontend.video_patch_dim(cfg.n_f)


def init_params(cfg: RunConfig, vocab_size: int, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    params = ModelParams()
    encoders.init_encoder_params(params, cfg.encoder, rng, audio_geometry(cfg), video_geometry(cfg))
    decoders.init_projection_params(params, cfg.encoder.D, cfg.decoder.D, rng, cfg.decoder.init_std)
    decoders.init_decoder_params(params, cfg.decoder, vocab_size, rng)
    return params


class AVCapModel(object):

    def __init__(self, cfg: RunConfig, params: ModelParams):
        self.cfg = cfg
        self.params = params
        self.vocab_size = params['{}.token_embed'.format(constants.GROUP_DECODER)].shape[0]

    @staticmethod
    def create(cfg: RunConfig, vocab_size: int, seed: int = None) -> AVCapModel:
        if cfg.decoder.vocab_size and cfg.decoder.vocab_size != vocab_size:
            raise ConfigError('decoder.vocab_size={} but the vocabulary has {} tokens'.format(
                cfg.decoder.vocab_size, vocab_size))
        seed = cfg.train.seed if seed is None else seed
        params = init_params(cfg, vocab_size, seed)
        logger.debug('AVCapModel.create() {} tensors, {} values'.format(len(params), params.numel()))
        return AVCapModel(cfg, params)

    def astype(self, dtype) -> AVCapModel:
        return AVCapModel(self.cfg, self.params.astype(dtype))

    # ---------------------------------------------------------------------------------------------
    # Forward
    # ---------------------------------------------------------------------------------------------
    def encode(self, audio_patches=None, video_patches=None) -> AVFeature:
        if self.cfg.modality.has_audio() and audio_patches is None:
            raise ShapeError('Modality {} needs audio patches'.format(self.cfg.modality.value))
        if self.cfg.modality.has_video() and video_patches is None:
            raise ShapeError('Modality {} needs video patches'.format(self.cfg.modality.value))
        return encoders.encode_av(
            self.params, self.cfg.encoder,
            audio_patches if self.cfg.modality.has_audio() else None,
            video_patches if self.cfg.modality.has_video() else None)

    def project(self, av: AVFeature) -> Tensor:
        return decoders.project_av(av.tokens, self.params['projection.weight'], self.params['projection.bias'])

    # Teacher-forced logits (B, T, V) for a padded batch.
    def logits(self, av: AVFeature, batch: TokenBatch) -> Tensor:
        h_av = self.project(av)
        h_t = decoders.text_embed(batch.input_ids, self.params)
        mask = decoders.build_batch_mask(av.count, batch.pad_mask)
        z_t = decoders.decode(h_av, h_t, self.params, self.cfg.decoder, mask)
        return decoders.text_logits(z_t, av.count, self.params, self.cfg.decoder)

    def forward(self, batch: TokenBatch, audio_patches=None, video_patches=None) -> Tensor:
        return self.logits(self.encode(audio_patches, video_patches), batch)

    #
    # Decoding session for one sample (AV feature of batch size 1).
    #
    def open_session(self, av: AVFeature) -> decoders.IncrementalDecoder:
        with tensors.no_grad():
            h_av = self.project(av)
        return decoders.IncrementalDecoder(self.params, self.cfg.decoder, h_av.detach())

    def metadata(self) -> dict:
        return {
            'config': self.cfg.to_dict(),
            'vocab_size': self.vocab_size
        }

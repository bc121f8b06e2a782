# -*- coding: utf-8 -*-
#
# AVCap caption decoder.
#
#   h_av->t = z_av @ W_t + b_t                      projection
#   h_t     = token_embed[x_t] + pos_embed[0:T]     text embedding, segment-local positions
#   z_t     = decoder(Concat(h_av->t, h_t); M)      masked pre-norm blocks + final LN
#   logits  = head(z_t[n_av:])
#
# M lets AV tokens see each other only, and text tokens see every AV token plus the text
# tokens up to themselves. Columns of padded text positions are closed for every row.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import abc
import dataclasses
import logging
import typing

import numpy as np

from avcap import blocks
from avcap import constants
from avcap import tensors
from avcap.constants import ShapeError
from avcap.settings import DecoderConfig
from avcap.tensors import Tensor, ModelParams

logger = logging.getLogger(__name__)

PROJECTION = constants.GROUP_PROJECTION
DECODER = constants.GROUP_DECODER
HEAD = constants.GROUP_HEAD


# -------------------------------------------------------------------------------------------------
# Parameters
# -------------------------------------------------------------------------------------------------
def init_projection_params(params: ModelParams, enc_D: int, dec_D: int, rng: np.random.Generator,
                           std: float = constants.INIT_STD):
    blocks.init_linear(params, PROJECTION, enc_D, dec_D, rng, std)


def init_decoder_params(params: ModelParams, cfg: DecoderConfig, vocab_size: int, rng: np.random.Generator):
    params.add('{}.token_embed'.format(DECODER), tensors.truncated_normal(rng, (vocab_size, cfg.D), cfg.init_std))
    params.add('{}.pos_embed'.format(DECODER), tensors.truncated_normal(rng, (cfg.max_text_len, cfg.D), cfg.init_std))
    for i in range(cfg.layers):
        blocks.init_transformer_layer(params, '{}.layers.{}'.format(DECODER, i), cfg.D, rng,
                                      cfg.mlp_ratio, cfg.init_std)
    blocks.init_layer_norm(params, '{}.norm'.format(DECODER), cfg.D)
    if not cfg.tie_output_embedding:
        blocks.init_linear(params, HEAD, cfg.D, vocab_size, rng, cfg.init_std)


# -------------------------------------------------------------------------------------------------
# Attention mask
# -------------------------------------------------------------------------------------------------
def build_attention_mask(n_av: int, pad_mask: typing.Sequence[bool]) -> np.ndarray:
    pad_mask = np.asarray(pad_mask, dtype=bool)
    T = pad_mask.shape[0]
    N = n_av + T
    m = np.zeros((N, N), dtype=bool)
    m[:n_av, :n_av] = True
    m[n_av:, :n_av] = True
    m[n_av:, n_av:] = np.tril(np.ones((T, T), dtype=bool))
    m[:, n_av:] &= pad_mask[np.newaxis, :]
    return m


# (B, T) pad mask -> (B, 1, N, N), broadcast over heads.
def build_batch_mask(n_av: int, pad_mask: np.ndarray) -> np.ndarray:
    pad_mask = np.atleast_2d(np.asarray(pad_mask, dtype=bool))
    return np.stack([build_attention_mask(n_av, row) for row in pad_mask])[:, np.newaxis]


# -------------------------------------------------------------------------------------------------
# Forward
# -------------------------------------------------------------------------------------------------
def project_av(z: Tensor, W_t: Tensor, b_t: Tensor) -> Tensor:
    if W_t.ndim != 2 or W_t.shape[0] != z.shape[-1] or b_t.shape != (W_t.shape[1],):
        raise ShapeError('Projection {} / {} does not accept tokens of width {}'.format(
            W_t.shape, b_t.shape, z.shape[-1]))
    return tensors.linear(z, W_t, b_t)


def text_embed(input_ids, params: ModelParams) -> Tensor:
    input_ids = np.asarray(input_ids, dtype=np.int64)
    T = input_ids.shape[-1]
    pos = params['{}.pos_embed'.format(DECODER)]
    if T > pos.shape[0]:
        raise ShapeError('Text length {} exceeds the {} decoder positions'.format(T, pos.shape[0]))
    return tensors.embedding_lookup(params['{}.token_embed'.format(DECODER)], input_ids) + pos[0:T]


def decode(h_av: Tensor, h_t: Tensor, params: ModelParams, cfg: DecoderConfig, mask: np.ndarray) -> Tensor:
    if h_av.shape[-1] != h_t.shape[-1]:
        raise ShapeError('AV width {} and text width {} differ'.format(h_av.shape[-1], h_t.shape[-1]))
    z = tensors.concat([h_av, h_t], axis=-2) if h_av.shape[-2] > 0 else h_t
    for i in range(cfg.layers):
        z = blocks.transformer_layer(z, params, '{}.layers.{}'.format(DECODER, i), cfg.H, mask, cfg.ln_eps)
    return blocks.apply_layer_norm(z, params, '{}.norm'.format(DECODER), cfg.ln_eps)


def apply_head(z_text: Tensor, params: ModelParams, cfg: DecoderConfig) -> Tensor:
    if cfg.tie_output_embedding:
        return tensors.matmul(z_text, params['{}.token_embed'.format(DECODER)].transpose(1, 0))
    return blocks.apply_linear(z_text, params, HEAD)


def text_logits(z_t: Tensor, n_av: int, params: ModelParams, cfg: DecoderConfig) -> Tensor:
    length = z_t.shape[-2]
    if n_av >= length:
        raise ShapeError('No text positions: n_av={} and sequence length {}'.format(n_av, length))
    return apply_head(z_t[..., n_av:, :], params, cfg)


# -------------------------------------------------------------------------------------------------
# Incremental decoding
# -------------------------------------------------------------------------------------------------
class DecodingSession(abc.ABC):
    """
    Step-wise next-token distribution for one AV input. States are opaque per hypothesis.
    """

    @property
    @abc.abstractmethod
    def vocab_size(self) -> int: return 0

    @abc.abstractmethod
    def start(self): pass

    #
    # Feeds one token per hypothesis and returns (log-probabilities (n, V), new states).
    #
    @abc.abstractmethod
    def step(self, states: list, tokens: typing.Sequence[int]) -> typing.Tuple[np.ndarray, list]: pass


@dataclasses.dataclass
class TextCache:
    # per layer: (H, t, dh) keys and values of the text tokens fed so far
    keys: typing.List[np.ndarray]
    values: typing.List[np.ndarray]
    position: int


class IncrementalDecoder(DecodingSession):
    """
    Runs the AV prefix once and caches its per-layer keys and values. Each step appends one text
    token per hypothesis. AV rows never attend to text, so the prefix cache stays valid.
    """

    def __init__(self, params: ModelParams, cfg: DecoderConfig, h_av: Tensor):
        self.params = params
        self.cfg = cfg
        self.D = cfg.D
        self.H = cfg.H
        self.dh = cfg.D // cfg.H
        self._vocab_size = params['{}.token_embed'.format(DECODER)].shape[0]
        self.max_positions = params['{}.pos_embed'.format(DECODER)].shape[0]
        if h_av.ndim == 2:
            h_av = h_av.reshape(1, h_av.shape[0], h_av.shape[1])
        self.n_av = h_av.shape[1]
        self.av_keys = []
        self.av_values = []
        with tensors.no_grad():
            h = h_av
            for i in range(cfg.layers):
                prefix = '{}.layers.{}'.format(DECODER, i)
                normed = blocks.apply_layer_norm(h, params, '{}.norm1'.format(prefix), cfg.ln_eps)
                _, k, v = blocks.attention_qkv(normed, params, '{}.attn'.format(prefix), cfg.H)
                self.av_keys.append(k.data[0])
                self.av_values.append(v.data[0])
                if self.n_av > 0:
                    h = blocks.transformer_layer(h, params, prefix, cfg.H, None, cfg.ln_eps)

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    def start(self) -> TextCache:
        empty = np.zeros((self.H, 0, self.dh), dtype=self.params.dtype)
        return TextCache(keys=[empty] * self.cfg.layers, values=[empty] * self.cfg.layers, position=0)

    def step(self, states: typing.List[TextCache], tokens: typing.Sequence[int]) -> typing.Tuple[np.ndarray, list]:
        n = len(states)
        position = states[0].position
        if any(s.position != position for s in states):
            raise ShapeError('All hypotheses of one step must have the same length')
        if position >= self.max_positions:
            raise ShapeError('Text length {} exceeds the {} decoder positions'.format(position + 1, self.max_positions))

        params, cfg = self.params, self.cfg
        new_keys = [[] for _ in range(n)]
        new_values = [[] for _ in range(n)]
        with tensors.no_grad():
            ids = np.asarray(tokens, dtype=np.int64).reshape(n, 1)
            x = tensors.embedding_lookup(params['{}.token_embed'.format(DECODER)], ids) \
                + params['{}.pos_embed'.format(DECODER)][position:position + 1]
            for i in range(cfg.layers):
                prefix = '{}.layers.{}'.format(DECODER, i)
                normed = blocks.apply_layer_norm(x, params, '{}.norm1'.format(prefix), cfg.ln_eps)
                q, k, v = blocks.attention_qkv(normed, params, '{}.attn'.format(prefix), cfg.H)
                keys = np.stack([np.concatenate([self.av_keys[i], s.keys[i], k.data[j]], axis=1)
                                 for j, s in enumerate(states)])
                values = np.stack([np.concatenate([self.av_values[i], s.values[i], v.data[j]], axis=1)
                                   for j, s in enumerate(states)])
                for j in range(n):
                    new_keys[j].append(keys[j, :, self.n_av:])
                    new_values[j].append(values[j, :, self.n_av:])
                attended = blocks.scaled_dot_product(q, Tensor(keys), Tensor(values), None)
                x = blocks.apply_linear(blocks.merge_heads(attended), params, '{}.attn.out'.format(prefix)) + x
                x = blocks.mlp_block(blocks.apply_layer_norm(x, params, '{}.norm2'.format(prefix), cfg.ln_eps),
                                     params, '{}.mlp'.format(prefix)) + x
            z = blocks.apply_layer_norm(x, params, '{}.norm'.format(DECODER), cfg.ln_eps)
            log_probs = tensors.log_softmax(apply_head(z, params, cfg)).data[:, 0, :]

        new_states = [TextCache(keys=new_keys[j], values=new_values[j], position=position + 1) for j in range(n)]
        return log_probs, new_states

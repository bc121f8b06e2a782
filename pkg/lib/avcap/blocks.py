# -*- coding: utf-8 -*-
#
# AVCap transformer building blocks shared by the encoders and the caption decoder.
#
# Parameters live in a ModelParams store under dotted names. A pre-norm layer with prefix
# "audio_encoder.layers.0" owns:
#   .norm1.weight/.bias  .attn.{query,key,value,out}.weight/.bias
#   .norm2.weight/.bias  .mlp.fc1.weight/.bias  .mlp.fc2.weight/.bias
# Weights use the row-vector convention: y = x @ W + b with W of shape (in, out).
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import logging
import typing

import numpy as np

from avcap import constants
from avcap import tensors
from avcap.constants import ShapeError
from avcap.tensors import Tensor, ModelParams

logger = logging.getLogger(__name__)

ATTENTION_PROJECTIONS = ['query', 'key', 'value', 'out']


# -------------------------------------------------------------------------------------------------
# Parameter initialisation
# -------------------------------------------------------------------------------------------------
def init_linear(params: ModelParams, name: str, d_in: int, d_out: int, rng: np.random.Generator,
                std: float = constants.INIT_STD, bias: bool = True):
    params.add('{}.weight'.format(name), tensors.truncated_normal(rng, (d_in, d_out), std))
    if bias:
        params.add('{}.bias'.format(name), np.zeros(d_out, dtype=tensors.DEFAULT_DTYPE))


def init_layer_norm(params: ModelParams, name: str, D: int):
    params.add('{}.weight'.format(name), np.ones(D, dtype=tensors.DEFAULT_DTYPE))
    params.add('{}.bias'.format(name), np.zeros(D, dtype=tensors.DEFAULT_DTYPE))


def init_transformer_layer(params: ModelParams, prefix: str, D: int, rng: np.random.Generator,
                           mlp_ratio: int = constants.MLP_RATIO, std: float = constants.INIT_STD):
    init_layer_norm(params, '{}.norm1'.format(prefix), D)
    for proj in ATTENTION_PROJECTIONS:
        init_linear(params, '{}.attn.{}'.format(prefix, proj), D, D, rng, std)
    init_layer_norm(params, '{}.norm2'.format(prefix), D)
    init_linear(params, '{}.mlp.fc1'.format(prefix), D, mlp_ratio * D, rng, std)
    init_linear(params, '{}.mlp.fc2'.format(prefix), mlp_ratio * D, D, rng, std)


# -------------------------------------------------------------------------------------------------
# Forward blocks
# -------------------------------------------------------------------------------------------------
def apply_linear(x: Tensor, params: ModelParams, name: str) -> Tensor:
    bias_name = '{}.bias'.format(name)
    bias = params[bias_name] if bias_name in params else None
    return tensors.linear(x, params['{}.weight'.format(name)], bias)


def apply_layer_norm(x: Tensor, params: ModelParams, name: str, eps: float = constants.LN_EPS) -> Tensor:
    return tensors.layer_norm(x, params['{}.weight'.format(name)], params['{}.bias'.format(name)], eps)


def split_heads(x: Tensor, H: int) -> Tensor:
    B, N, D = x.shape
    return x.reshape(B, N, H, D // H).transpose(0, 2, 1, 3)


def merge_heads(x: Tensor) -> Tensor:
    B, H, N, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, N, H * dh)


# (B, N, D) -> per-head query, key and value of shape (B, H, N, D/H).
def attention_qkv(x: Tensor, params: ModelParams, prefix: str, H: int) -> typing.Tuple[Tensor, Tensor, Tensor]:
    D = x.shape[-1]
    if D % H:
        raise ShapeError('Embedding dimension {} is not divisible by {} heads'.format(D, H))
    q = split_heads(apply_linear(x, params, '{}.query'.format(prefix)), H)
    k = split_heads(apply_linear(x, params, '{}.key'.format(prefix)), H)
    v = split_heads(apply_linear(x, params, '{}.value'.format(prefix)), H)
    return q, k, v


def scaled_dot_product(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray = None) -> Tensor:
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = tensors.matmul(q, k.transpose(0, 1, 3, 2)) * scale
    return tensors.matmul(tensors.masked_softmax(scores, mask), v)


def _batched(x: Tensor) -> typing.Tuple[Tensor, bool]:
    if x.ndim == 2:
        return x.reshape(1, x.shape[0], x.shape[1]), True
    if x.ndim != 3:
        raise ShapeError('Expected a (N, D) or (B, N, D) tensor, got {}'.format(x.shape))
    return x, False


#
# Multi-head self attention with scale 1/sqrt(D/H). mask is None (all pairs allowed) or a 0/1
# array broadcastable to (B, H, N, N).
#
def multi_head_self_attention(x: Tensor, params: ModelParams, prefix: str, H: int,
                              mask: np.ndarray = None) -> Tensor:
    xb, squeezed = _batched(x)
    q, k, v = attention_qkv(xb, params, prefix, H)
    out = apply_linear(merge_heads(scaled_dot_product(q, k, v, mask)), params, '{}.out'.format(prefix))
    return out.reshape(x.shape) if squeezed else out


def mlp_block(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    hidden = tensors.gelu(apply_linear(x, params, '{}.fc1'.format(prefix)))
    return apply_linear(hidden, params, '{}.fc2'.format(prefix))


#
# Pre-norm residual layer:
#   h' = MSA(LN(h)) + h
#   out = MLP(LN(h')) + h'
#
def transformer_layer(h: Tensor, params: ModelParams, prefix: str, H: int, mask: np.ndarray = None,
                      eps: float = constants.LN_EPS) -> Tensor:
    attended = multi_head_self_attention(
        apply_layer_norm(h, params, '{}.norm1'.format(prefix), eps), params, '{}.attn'.format(prefix), H, mask)
    h = attended + h
    return mlp_block(apply_layer_norm(h, params, '{}.norm2'.format(prefix), eps), params, '{}.mlp'.format(prefix)) + h

# -*- coding: utf-8 -*-
#
# AVCap caption text pipeline: vocabulary, x_t/y_t construction, batch padding and decoding.
#
# Word-level tokens after normalize_caption(). Special ids are fixed: [PAD]=0, [BOS]=1,
# [EOS]=2, [UNK]=3. The vocabulary file has one token per line and the line number is the id.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import collections
import dataclasses
import logging
import typing

import numpy as np

from avcap import constants
from avcap.constants import InputError
from avcap.utils import io
from avcap.utils import text

logger = logging.getLogger(__name__)


class Vocabulary(object):

    def __init__(self, tokens: typing.List[str]):
        if tokens[:len(constants.SPECIAL_TOKENS)] != constants.SPECIAL_TOKENS:
            raise InputError('Vocabulary must start with {}'.format(', '.join(constants.SPECIAL_TOKENS)))
        self.id_to_token = list(tokens)
        self.token_to_id = {tok: idx for idx, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise InputError('Vocabulary contains duplicate tokens')

    def __len__(self):
        return len(self.id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def id_of(self, word: str) -> int:
        return self.token_to_id.get(word, constants.UNK_ID)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.id_to_token):
            raise InputError('Token id {} outside vocabulary of size {}'.format(token_id, len(self.id_to_token)))
        return self.id_to_token[token_id]

    def words(self) -> typing.List[str]:
        return self.id_to_token[len(constants.SPECIAL_TOKENS):]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token


@dataclasses.dataclass
class TokenSequence:
    input_ids: typing.List[int]
    target_ids: typing.List[int]
    pad_mask: typing.List[bool]

    def __len__(self):
        return len(self.input_ids)


@dataclasses.dataclass
class TokenBatch:
    # (B, T) arrays; pad_mask true on real tokens
    input_ids: np.ndarray
    target_ids: np.ndarray
    pad_mask: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.input_ids.shape[0]

    @property
    def T(self) -> int:
        return self.input_ids.shape[1]

    def row(self, index: int) -> TokenSequence:
        return TokenSequence(input_ids=self.input_ids[index].tolist(),
                             target_ids=self.target_ids[index].tolist(),
                             pad_mask=self.pad_mask[index].tolist())


# -------------------------------------------------------------------------------------------------
# Vocabulary
# -------------------------------------------------------------------------------------------------
#
# Words with frequency >= min_count, ordered by (-frequency, word) after the specials.
#
def build_vocab(corpus: typing.Iterable[str], min_count: int = 1) -> Vocabulary:
    counts = collections.Counter()
    for caption in corpus:
        counts.update(text.tokenize_caption(caption))
    if not counts:
        raise InputError('Cannot build a vocabulary from an empty corpus')
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    logger.debug('build_vocab() {} distinct words, {} kept at min_count={}'.format(len(counts), len(kept), min_count))
    return Vocabulary(constants.SPECIAL_TOKENS + kept)


def save_vocab(v: Vocabulary, vocab_FN: io.FileName):
    vocab_FN.saveStrToFile(''.join(tok + '\n' for tok in v.id_to_token))


def load_vocab(vocab_FN: io.FileName) -> Vocabulary:
    if not vocab_FN.exists():
        raise InputError('Vocabulary file {} does not exist'.format(vocab_FN.getPath()))
    return Vocabulary(vocab_FN.loadFileToStr().splitlines())


# -------------------------------------------------------------------------------------------------
# Encoding and decoding
# -------------------------------------------------------------------------------------------------
# x_t = [BOS] + ids, y_t = ids + [EOS]
def encode_caption(v: Vocabulary, caption: str) -> TokenSequence:
    ids = [v.id_of(w) for w in text.tokenize_caption(caption)]
    return TokenSequence(input_ids=[constants.BOS_ID] + ids,
                         target_ids=ids + [constants.EOS_ID],
                         pad_mask=[True] * (len(ids) + 1))


def pad_batch(batch: typing.Sequence[TokenSequence]) -> TokenBatch:
    if not batch:
        raise InputError('pad_batch() needs at least one sequence')
    T = max(len(seq) for seq in batch)
    input_ids = np.full((len(batch), T), constants.PAD_ID, dtype=np.int64)
    target_ids = np.full((len(batch), T), constants.PAD_ID, dtype=np.int64)
    pad_mask = np.zeros((len(batch), T), dtype=bool)
    for row, seq in enumerate(batch):
        n = len(seq)
        input_ids[row, :n] = seq.input_ids
        target_ids[row, :n] = seq.target_ids
        pad_mask[row, :n] = seq.pad_mask
    return TokenBatch(input_ids=input_ids, target_ids=target_ids, pad_mask=pad_mask)


# Stops at the first EOS, skips BOS and PAD.
def decode_ids(v: Vocabulary, ids: typing.Iterable[int]) -> str:
    words = []
    for token_id in ids:
        token_id = int(token_id)
        token = v.token_of(token_id)
        if token_id == constants.EOS_ID:
            break
        if token_id in (constants.BOS_ID, constants.PAD_ID):
            continue
        words.append(token)
    return ' '.join(words)

# -*- coding: utf-8 -*-
#
# AVCap caption generation: greedy decoding and length-penalised beam search.
#
# Decoding starts from x_t = [BOS]. Hypothesis ids never include the BOS token; a finished
# hypothesis ends with EOS. Scores are logprob / ((5 + len) / 6) ** alpha.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import dataclasses
import logging
import typing

import numpy as np

from avcap import captions
from avcap import constants
from avcap import tensors
from avcap.constants import ConfigError
from avcap.encoders import AVFeature
from avcap.settings import InferenceConfig

logger = logging.getLogger(__name__)


def length_penalty(length: int, alpha: float) -> float:
    if length < 1:
        raise ConfigError('length_penalty() needs length >= 1, got {}'.format(length))
    return ((5.0 + length) / 6.0) ** alpha


@dataclasses.dataclass
class ScoredHypothesis:
    ids: typing.List[int]
    logprob: float
    finished: bool
    score: float

    @staticmethod
    def create(ids: typing.List[int], logprob: float, alpha: float) -> ScoredHypothesis:
        finished = bool(ids) and ids[-1] == constants.EOS_ID
        return ScoredHypothesis(ids=list(ids), logprob=logprob, finished=finished,
                                score=logprob / length_penalty(len(ids), alpha))

    def rank_key(self):
        return (-self.score, self.ids)


# -------------------------------------------------------------------------------------------------
# Greedy
# -------------------------------------------------------------------------------------------------
def greedy_hypothesis(model, av: AVFeature, max_len: int, alpha: float = 0.0) -> ScoredHypothesis:
    if max_len < 1:
        raise ConfigError('max_len must be >= 1, got {}'.format(max_len))
    session = model.open_session(av)
    state = session.start()
    token = constants.BOS_ID
    ids = []
    logprob = 0.0
    while len(ids) < max_len:
        log_probs, (state,) = session.step([state], [token])
        # np.argmax returns the lowest id among ties.
        token = int(np.argmax(log_probs[0]))
        logprob += float(log_probs[0, token])
        ids.append(token)
        if token == constants.EOS_ID:
            break
    return ScoredHypothesis.create(ids, logprob, alpha)


def greedy_decode(model, av: AVFeature, max_len: int) -> typing.List[int]:
    return greedy_hypothesis(model, av, max_len).ids


# -------------------------------------------------------------------------------------------------
# Beam search
# -------------------------------------------------------------------------------------------------
@dataclasses.dataclass
class _Alive:
    ids: typing.List[int]
    logprob: float
    state: typing.Any


@dataclasses.dataclass
class _Width:
    size: int
    alive: typing.List[_Alive]
    pool: typing.List[ScoredHypothesis] = dataclasses.field(default_factory=list)

    @property
    def capacity(self) -> int:
        return self.size - len(self.pool)

    def running(self) -> bool:
        return bool(self.alive) and self.capacity > 0


#
# One width w: every step extends each live hypothesis by every token and keeps the best
# (w - finished) candidates. Candidates ending in EOS retire to the pool; live hypotheses
# that reach max_len join the pool unfinished. Ties rank by lower token sequence.
#
# A single width is not monotone in w (a wider beam can prune the path a narrower one keeps),
# so beam_search(beam) runs widths 1..beam in lockstep on one session and returns the best
# `beam` hypotheses of their merged pools. The top-1 score is then non-decreasing in beam and
# beam=1 stays greedy. Prefixes shared between widths are fed to the decoder once.
#
def beam_search(model, av: AVFeature, beam: int, alpha: float, max_len: int) -> typing.List[ScoredHypothesis]:
    if beam < 1:
        raise ConfigError('beam must be >= 1, got {}'.format(beam))
    if max_len < 1:
        raise ConfigError('max_len must be >= 1, got {}'.format(max_len))

    session = model.open_session(av)
    root = _Alive(ids=[], logprob=0.0, state=session.start())
    widths = [_Width(size=w, alive=[root]) for w in range(1, beam + 1)]

    for length in range(1, max_len + 1):
        running = [w for w in widths if w.running()]
        if not running:
            break
        prefixes: typing.Dict[tuple, _Alive] = {}
        for w in running:
            for h in w.alive:
                prefixes.setdefault(tuple(h.ids), h)
        fed = list(prefixes.values())
        tokens = [h.ids[-1] if h.ids else constants.BOS_ID for h in fed]
        log_probs, states = session.step([h.state for h in fed], tokens)
        row = {tuple(h.ids): j for j, h in enumerate(fed)}

        penalty = length_penalty(length, alpha)
        for w in running:
            candidates = []
            for h in w.alive:
                j = row[tuple(h.ids)]
                for token in range(log_probs.shape[1]):
                    logprob = h.logprob + float(log_probs[j, token])
                    candidates.append((-(logprob / penalty), h.ids + [token], logprob, j))
            candidates.sort(key=lambda c: (c[0], c[1]))

            next_alive = []
            for _, ids, logprob, j in candidates[:w.capacity]:
                if ids[-1] == constants.EOS_ID or length == max_len:
                    w.pool.append(ScoredHypothesis.create(ids, logprob, alpha))
                else:
                    next_alive.append(_Alive(ids=ids, logprob=logprob, state=states[j]))
            w.alive = next_alive

    merged: typing.Dict[tuple, ScoredHypothesis] = {}
    for w in widths:
        for h in w.pool:
            merged.setdefault(tuple(h.ids), h)
    return sorted(merged.values(), key=ScoredHypothesis.rank_key)[:beam]


# -------------------------------------------------------------------------------------------------
# Teacher-forced scoring and sample captioning
# -------------------------------------------------------------------------------------------------
#
# Sum of log-probabilities of ids under teacher forcing with x_t = [BOS] + ids[:-1].
#
def sequence_logprob(model, av: AVFeature, ids: typing.Sequence[int]) -> float:
    ids = list(ids)
    seq = captions.TokenSequence(input_ids=[constants.BOS_ID] + ids[:-1], target_ids=ids, pad_mask=[True] * len(ids))
    batch = captions.pad_batch([seq])
    with tensors.no_grad():
        log_probs = tensors.log_softmax(model.logits(av, batch)).data[0]
    return float(sum(log_probs[i, token] for i, token in enumerate(ids)))


def caption_sample(model, vocab: captions.Vocabulary, icfg: InferenceConfig, audio_patches=None,
                   video_patches=None, greedy: bool = False) -> typing.Tuple[str, float]:
    if icfg.max_len > model.cfg.decoder.max_text_len:
        raise ConfigError('max_len={} exceeds decoder.max_text_len={}'.format(
            icfg.max_len, model.cfg.decoder.max_text_len))
    with tensors.no_grad():
        av = model.encode(audio_patches, video_patches)
    if greedy:
        best = greedy_hypothesis(model, av, icfg.max_len, icfg.alpha)
    else:
        best = beam_search(model, av, icfg.beam, icfg.alpha, icfg.max_len)[0]
    return captions.decode_ids(vocab, best.ids), best.score

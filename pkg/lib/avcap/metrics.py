# -*- coding: utf-8 -*-
#
# AVCap caption metrics: corpus BLEU-1..4, ROUGE-L and CIDEr-D.
#
# Tokens come from the same normalisation as the caption pipeline. Every metric is a pure
# function of the pair list and does not depend on pair order.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import collections
import dataclasses
import logging
import math
import typing

import numpy as np
from nltk.translate.bleu_score import brevity_penalty, closest_ref_length, modified_precision

from avcap import constants
from avcap.constants import ConfigError, InputError
from avcap.utils import text

logger = logging.getLogger(__name__)

ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4
CIDER_SCALE = 10.0


@dataclasses.dataclass
class EvalPair:
    id: str
    candidate: typing.List[str]
    references: typing.List[typing.List[str]]


def make_pairs(candidates: typing.Dict[str, str],
               references: typing.Dict[str, typing.List[str]]) -> typing.List[EvalPair]:
    missing_candidates = sorted(set(references) - set(candidates))
    missing_references = sorted(set(candidates) - set(references))
    if missing_candidates or missing_references:
        raise InputError('Candidate/reference ids do not match. Missing candidates: [{}]; missing references: [{}]'
                         .format(', '.join(missing_candidates), ', '.join(missing_references)))
    pairs = []
    for key in sorted(candidates):
        refs = references[key]
        if not refs:
            raise InputError('Id "{}" has no reference captions'.format(key))
        pairs.append(EvalPair(id=key, candidate=text.tokenize_caption(candidates[key]),
                              references=[text.tokenize_caption(r) for r in refs]))
    return pairs


def _check_corpus(pairs: typing.Sequence[EvalPair]):
    if not pairs:
        raise InputError('Cannot evaluate an empty corpus')
    for p in pairs:
        if not p.references:
            raise InputError('Pair "{}" has no references'.format(p.id))


# -------------------------------------------------------------------------------------------------
# BLEU
# -------------------------------------------------------------------------------------------------
#
# Corpus BLEU: clipped k-gram counts are summed over the corpus before the geometric mean.
# The score is exactly 0 when any order has no match.
#
def bleu_n(pairs: typing.Sequence[EvalPair], n: int) -> float:
    if not 1 <= n <= 4:
        raise ConfigError('BLEU order must be in [1, 4], got {}'.format(n))
    _check_corpus(pairs)
    numerators = [0] * n
    denominators = [0] * n
    ref_len = hyp_len = 0
    for p in pairs:
        for k in range(1, n + 1):
            precision = modified_precision(p.references, p.candidate, k)
            numerators[k - 1] += precision.numerator
            denominators[k - 1] += precision.denominator
        hyp_len += len(p.candidate)
        ref_len += closest_ref_length(p.references, len(p.candidate))

    if any(num == 0 for num in numerators):
        return 0.0
    log_mean = sum(math.log(num / den) for num, den in zip(numerators, denominators)) / n
    return brevity_penalty(ref_len, hyp_len) * math.exp(log_mean)


# -------------------------------------------------------------------------------------------------
# ROUGE-L
# -------------------------------------------------------------------------------------------------
def lcs_length(a: typing.Sequence[str], b: typing.Sequence[str]) -> int:
    if not a or not b:
        return 0
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    for i, token_a in enumerate(a, start=1):
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return int(table[len(a), len(b)])


def rouge_l_pair(candidate: typing.Sequence[str], references: typing.Sequence[typing.Sequence[str]],
                 beta: float = ROUGE_BETA) -> float:
    best = 0.0
    for ref in references:
        lcs = lcs_length(candidate, ref)
        if lcs == 0:
            continue
        precision = lcs / len(candidate)
        recall = lcs / len(ref)
        score = ((1 + beta ** 2) * precision * recall) / (recall + beta ** 2 * precision)
        best = max(best, score)
    return best


def rouge_l(pairs: typing.Sequence[EvalPair]) -> float:
    _check_corpus(pairs)
    return float(np.mean([rouge_l_pair(p.candidate, p.references) for p in pairs]))


# -------------------------------------------------------------------------------------------------
# CIDEr-D
# -------------------------------------------------------------------------------------------------
def _ngram_counts(tokens: typing.Sequence[str], max_n: int = CIDER_MAX_N) -> collections.Counter:
    counts = collections.Counter()
    for k in range(1, max_n + 1):
        for i in range(len(tokens) - k + 1):
            counts[tuple(tokens[i:i + k])] += 1
    return counts


class CiderScorer(object):
    """
    CIDEr-D with document frequencies taken from the reference corpus. Per order: TF-IDF
    vectors, candidate weights clipped to the reference weights, Gaussian length penalty.
    """

    def __init__(self, pairs: typing.Sequence[EvalPair], sigma: float = CIDER_SIGMA, max_n: int = CIDER_MAX_N):
        _check_corpus(pairs)
        if len({p.id for p in pairs}) < 2:
            raise InputError('CIDEr needs a corpus of at least 2 distinct ids')
        self.pairs = pairs
        self.sigma = sigma
        self.max_n = max_n
        self.document_frequency = collections.Counter()
        for p in pairs:
            for ngram in set(ng for ref in p.references for ng in _ngram_counts(ref, max_n)):
                self.document_frequency[ngram] += 1
        self.log_corpus_size = math.log(float(len(pairs)))

    def _vector(self, tokens: typing.Sequence[str]):
        vec = [collections.defaultdict(float) for _ in range(self.max_n)]
        norm = [0.0] * self.max_n
        counts = _ngram_counts(tokens, self.max_n)
        for ngram, tf in counts.items():
            k = len(ngram) - 1
            df = math.log(max(1.0, float(self.document_frequency[ngram])))
            vec[k][ngram] = float(tf) * (self.log_corpus_size - df)
            norm[k] += vec[k][ngram] ** 2
        return vec, [math.sqrt(n) for n in norm], len(tokens)

    # An order where neither side has any k-grams (both captions shorter than k) counts as a match.
    def _similarity(self, hyp, ref) -> np.ndarray:
        vec_h, norm_h, len_h = hyp
        vec_r, norm_r, len_r = ref
        delta = float(len_h - len_r)
        val = np.zeros(self.max_n)
        for k in range(self.max_n):
            if not vec_h[k] and not vec_r[k]:
                val[k] = 1.0
            else:
                for ngram, weight in vec_h[k].items():
                    ref_weight = vec_r[k].get(ngram, 0.0)
                    val[k] += min(weight, ref_weight) * ref_weight
                if norm_h[k] != 0 and norm_r[k] != 0:
                    val[k] /= norm_h[k] * norm_r[k]
            val[k] *= math.exp(-(delta ** 2) / (2 * self.sigma ** 2))
        return val

    def pair_score(self, pair: EvalPair) -> float:
        hyp = self._vector(pair.candidate)
        total = np.zeros(self.max_n)
        for ref_tokens in pair.references:
            total += self._similarity(hyp, self._vector(ref_tokens))
        return float(np.mean(total) / len(pair.references) * CIDER_SCALE)

    def corpus_score(self) -> float:
        return float(np.mean([self.pair_score(p) for p in self.pairs]))


def cider(pairs: typing.Sequence[EvalPair]) -> float:
    return CiderScorer(pairs).corpus_score()


# -------------------------------------------------------------------------------------------------
# Report
# -------------------------------------------------------------------------------------------------
#
# bleu1..bleu4, rougeL and cider in that order. SPIDEr is the mean of SPICE and CIDEr and is
# only reported when a SPICE value is supplied.
#
def evaluate_corpus(pairs: typing.Sequence[EvalPair], spice: float = None) -> typing.Dict[str, float]:
    _check_corpus(pairs)
    scores = [bleu_n(pairs, n) for n in range(1, 5)] + [rouge_l(pairs), cider(pairs)]
    report = dict(zip(constants.METRIC_KEYS, scores))
    if spice is not None:
        report['spice'] = float(spice)
        report['spider'] = (float(spice) + report['cider']) / 2.0
    return report

# -*- coding: utf-8 -*-
#
# AVCap text utilities. Shared by the caption pipeline and the metrics.
#
import logging
import string
import typing

logger = logging.getLogger(__name__)

_PUNCTUATION_TABLE = str.maketrans({c: ' ' for c in string.punctuation})


#
# Caption normalisation: lowercase, ASCII punctuation replaced by blanks, whitespace collapsed.
# 'A dog, barking!' -> 'a dog barking'
#
def normalize_caption(caption: str) -> str:
    if caption is None:
        return ''
    return ' '.join(caption.lower().translate(_PUNCTUATION_TABLE).split())


def tokenize_caption(caption: str) -> typing.List[str]:
    return normalize_caption(caption).split()

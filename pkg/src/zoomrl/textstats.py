"""Lexical statistics feeding the reward gates: unique-word count and diversity.

Tokenization rule: lowercase the text, split on maximal runs of
non-alphanumeric characters, drop empty tokens. Diversity is the ratio of
distinct tokens to total tokens, defined as 0 for empty text so that empty
reasoning never clears a diversity gate.
"""

import re
from dataclasses import dataclass

# Unicode letters and digits; underscore is a separator, not a word character.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class LexStats:
    total_words: int
    unique_words: int
    diversity: float


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens in order of appearance."""
    return _WORD_RE.findall(text.lower())


def lex_stats(text: str) -> LexStats:
    tokens = tokenize(text)
    total = len(tokens)
    unique = len(set(tokens))
    diversity = unique / total if total > 0 else 0.0
    return LexStats(total_words=total, unique_words=unique, diversity=diversity)

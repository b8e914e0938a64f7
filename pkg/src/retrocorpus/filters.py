"""The quality-filter funnel.

Stage order is fixed: boilerplate -> duplicates -> invalid-chars -> patterns
-> length -> misc. Every stage except ``duplicates`` is a pure function of
one record; each is an sklearn-style estimator whose ``predict`` returns a
keep mask and whose ``transform`` returns the kept records.
"""

from __future__ import annotations

import re
import unicodedata
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import ParallelPair, Record, target_text
from .errors import ConfigError
from .tokenization import Tokenizer, WhitespaceTokenizer

STAGES = ("boilerplate", "duplicates", "invalid-chars", "patterns", "length", "misc")

DEFAULT_PREFIXES = ("Lista de alterações recentes", "Filtrar por")

PORTUGUESE_LETTERS = "áàâãéêíóôõúçÁÀÂÃÉÊÍÓÔÕÚÇ"
# Ordinal indicators are letters (category Lo) and common in Portuguese ("1.º", "2.ª").
ORDINAL_INDICATORS = "ªº"

_PUNCT_EDGES = re.compile(r"^\W+|\W+$")
_BLANK_LINE = re.compile(r"\n[ \t]*\n")


@dataclass(frozen=True)
class FilterVerdict:
    doc_id: str
    stage: str
    kept: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"id": self.doc_id, "stage": self.stage, "kept": self.kept, "reason": self.reason}


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    text = resources.files("retrocorpus").joinpath("data/stopwords_pt.txt").read_text(encoding="utf-8")
    return frozenset(w.strip().casefold() for w in text.splitlines() if w.strip())


def load_stopwords(path) -> frozenset[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return frozenset(w.strip().casefold() for w in fh if w.strip() and not w.startswith("#"))
    except OSError as exc:
        raise ConfigError(f"cannot read stopword list {path}: {exc}") from None


class FilterStage(BaseEstimator):
    """Base for per-record stages. Subclasses implement ``check``."""

    name = ""

    def fit(self, X=None, y=None):
        self.validate()
        return self

    def validate(self) -> None:
        pass

    def check(self, record: Record) -> tuple[bool, str]:
        raise NotImplementedError

    def verdict(self, record: Record) -> FilterVerdict:
        kept, reason = self.check(record)
        return FilterVerdict(record.id, self.name, kept, reason)

    def predict(self, X: Iterable[Record]) -> np.ndarray:
        return np.array([self.check(r)[0] for r in X], dtype=bool)

    def transform(self, X: Iterable[Record]) -> list[Record]:
        return [r for r in X if self.check(r)[0]]

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)


# -- boilerplate ------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    text: str
    word_count: int
    stopword_density: float
    category: str = ""


def segment_blocks(text: str, stopwords: frozenset[str] | None = None) -> list[Block]:
    """Split on blank lines and attach word count and stopword density."""
    stopwords = default_stopwords() if stopwords is None else stopwords
    blocks = []
    for chunk in _BLANK_LINE.split(text):
        chunk = chunk.strip()
        if not chunk:
            continue
        words = chunk.split()
        hits = sum(1 for w in words if _PUNCT_EDGES.sub("", w).casefold() in stopwords)
        density = hits / len(words) if words else 0.0
        blocks.append(Block(chunk, len(words), density))
    return blocks


def check_thresholds(length_low, length_high, density_low, density_high) -> None:
    if length_low > length_high:
        raise ConfigError(f"length_low ({length_low}) > length_high ({length_high})")
    if density_low > density_high:
        raise ConfigError(f"density_low ({density_low}) > density_high ({density_high})")
    if not (0.0 <= density_low <= 1.0 and 0.0 <= density_high <= 1.0):
        raise ConfigError("stopword density thresholds must lie in [0, 1]")


def classify_block(block: Block, length_low: int = 15, length_high: int = 70,
                   density_low: float = 0.25, density_high: float = 0.32) -> str:
    check_thresholds(length_low, length_high, density_low, density_high)
    if block.word_count < length_low:
        return "short"
    if block.stopword_density >= density_high:
        return "good" if block.word_count >= length_high else "near-good"
    if block.stopword_density >= density_low:
        return "near-good"
    return "bad"


def reclassify(categories: Sequence[str]) -> list[str]:
    """Short and near-good blocks next to a good block become good, else bad.

    Uses the context-free classes, so promotion does not cascade.
    """
    out = []
    for i, cat in enumerate(categories):
        if cat in ("good", "bad"):
            out.append(cat)
            continue
        left = categories[i - 1] if i > 0 else None
        right = categories[i + 1] if i + 1 < len(categories) else None
        out.append("good" if "good" in (left, right) else "bad")
    return out


class BoilerplateFilter(FilterStage):
    name = "boilerplate"

    def __init__(self, length_low=15, length_high=70, density_low=0.25, density_high=0.32,
                 keep_fraction=0.5, stopwords=None):
        self.length_low = length_low
        self.length_high = length_high
        self.density_low = density_low
        self.density_high = density_high
        self.keep_fraction = keep_fraction
        self.stopwords = stopwords

    def validate(self):
        check_thresholds(self.length_low, self.length_high, self.density_low, self.density_high)
        if not 0.0 <= self.keep_fraction <= 1.0:
            raise ConfigError("keep_fraction must lie in [0, 1]")

    def blocks(self, text: str) -> list[Block]:
        stop = frozenset(self.stopwords) if self.stopwords is not None else None
        raw = segment_blocks(text, stop)
        first = [classify_block(b, self.length_low, self.length_high, self.density_low, self.density_high)
                 for b in raw]
        final = reclassify(first)
        return [Block(b.text, b.word_count, b.stopword_density, c) for b, c in zip(raw, final)]

    def check(self, record):
        blocks = self.blocks(target_text(record))
        total = sum(b.word_count for b in blocks)
        if total == 0:
            return False, "no words"
        good = sum(b.word_count for b in blocks if b.category == "good")
        frac = good / total
        if frac >= self.keep_fraction:
            return True, ""
        return False, f"good-block word fraction {frac:.3f} < {self.keep_fraction}"


# -- duplicates --------------------------------------------------------------

class DuplicateFilter(BaseEstimator):
    """Exact-duplicate removal on the target text; first occurrence wins.

    Not a pure per-record stage: ``seen_`` accumulates across calls until
    ``reset`` (or ``fit``) is called.
    """

    name = "duplicates"

    def fit(self, X=None, y=None):
        self.seen_ = set()
        return self

    def reset(self):
        return self.fit()

    def verdict(self, record: Record) -> FilterVerdict:
        if not hasattr(self, "seen_"):
            self.fit()
        text = target_text(record)
        if text in self.seen_:
            return FilterVerdict(record.id, self.name, False, "duplicate text")
        self.seen_.add(text)
        return FilterVerdict(record.id, self.name, True, "")

    def predict(self, X):
        self.fit()
        return np.array([self.verdict(r).kept for r in X], dtype=bool)

    def transform(self, X):
        self.fit()
        return [r for r in X if self.verdict(r).kept]

    def fit_transform(self, X, y=None):
        return self.transform(X)


def dedup_filter(records: Iterable[Record]) -> tuple[list[Record], list[FilterVerdict]]:
    stage = DuplicateFilter().fit()
    kept, verdicts = [], []
    for r in records:
        v = stage.verdict(r)
        verdicts.append(v)
        if v.kept:
            kept.append(r)
    return kept, verdicts


# -- invalid characters -----------------------------------------------------

class CharsetFilter(FilterStage):
    """Drop texts containing letters outside the Portuguese alphabet.

    Only Unicode letter categories are screened; digits, punctuation, symbols
    and emoji pass unless ``allow_non_letters`` is False, in which case only
    ASCII printable characters, whitespace and common typographic marks pass.
    """

    name = "invalid-chars"
    _TYPOGRAPHIC = set("«»“”‘’–—…€°§")

    def __init__(self, extra_letters=ORDINAL_INDICATORS, allow_non_letters=True):
        self.extra_letters = extra_letters
        self.allow_non_letters = allow_non_letters

    def _allowed(self) -> frozenset[str]:
        ascii_letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
        return frozenset(ascii_letters + PORTUGUESE_LETTERS + (self.extra_letters or ""))

    def check(self, record):
        allowed = self._allowed()
        for ch in target_text(record):
            if ch in allowed:
                continue
            if unicodedata.category(ch).startswith("L"):
                return False, f"letter {ch!r} (U+{ord(ch):04X}) not in alphabet"
            if not self.allow_non_letters and not (ch.isspace() or " " <= ch <= "~" or ch in self._TYPOGRAPHIC):
                return False, f"character {ch!r} (U+{ord(ch):04X}) not allowed"
        return True, ""


def charset_filter(record: Record, extra_letters=ORDINAL_INDICATORS, allow_non_letters=True) -> FilterVerdict:
    return CharsetFilter(extra_letters, allow_non_letters).verdict(record)


# -- patterns ---------------------------------------------------------------

def parse_blocklist(lines: Iterable[str]) -> tuple[list[str], list[str]]:
    """Lines starting ``re:`` are regexes, the rest literal prefixes; ``#`` comments."""
    prefixes, patterns = [], []
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("re:"):
            patterns.append(line[3:])
        else:
            prefixes.append(line)
    return prefixes, patterns


class PatternFilter(FilterStage):
    name = "patterns"

    def __init__(self, prefixes=DEFAULT_PREFIXES, patterns=()):
        self.prefixes = prefixes
        self.patterns = patterns

    def validate(self):
        self._compiled()

    def _compiled(self):
        key = tuple(self.patterns)
        if getattr(self, "_compiled_key", None) != key:
            compiled = []
            for p in key:
                try:
                    compiled.append(re.compile(p))
                except re.error as exc:
                    raise ConfigError(f"malformed pattern {p!r}: {exc}") from None
            self._compiled_key, self._compiled_cache = key, compiled
        return self._compiled_cache

    def check(self, record):
        text = target_text(record)
        for prefix in self.prefixes:
            if text.startswith(prefix):
                return False, f"prefix {prefix!r}"
        for rx in self._compiled():
            if rx.search(text):
                return False, f"pattern {rx.pattern!r}"
        return True, ""


def pattern_filter(record: Record, prefixes=DEFAULT_PREFIXES, patterns=()) -> FilterVerdict:
    return PatternFilter(prefixes, patterns).fit().verdict(record)


# -- combined length ----------------------------------------------------------

class LengthFilter(FilterStage):
    """Cap on source + target token count; only meaningful for pairs."""

    name = "length"

    def __init__(self, tokenizer=None, max_total=900):
        self.tokenizer = tokenizer
        self.max_total = max_total

    def validate(self):
        if self.max_total <= 0:
            raise ConfigError("max_total_tokens must be positive")

    def check(self, record):
        if not isinstance(record, ParallelPair):
            raise TypeError("the length stage needs ParallelPair records")
        tok: Tokenizer = self.tokenizer or WhitespaceTokenizer()
        total = tok.count(record.source_text) + tok.count(record.target_text)
        if total > self.max_total:
            return False, f"{total} tokens > {self.max_total}"
        return True, ""


def length_filter(pair: ParallelPair, tokenizer=None, max_total: int = 900) -> FilterVerdict:
    return LengthFilter(tokenizer, max_total).fit().verdict(pair)


# -- miscellaneous balance checks --------------------------------------------

_BRACKETS = (("(", ")"), ("[", "]"), ("{", "}"), ("«", "»"), ("“", "”"))


class MiscFilter(FilterStage):
    name = "misc"

    def check(self, record):
        text = target_text(record)
        for open_, close in _BRACKETS:
            a, b = text.count(open_), text.count(close)
            if a != b:
                return False, f"unbalanced {open_}{close}: {a} vs {b}"
        if text.count('"') % 2:
            return False, 'odd number of " quotes'
        return True, ""


def misc_filter(record: Record) -> FilterVerdict:
    return MiscFilter().verdict(record)


def boilerplate_filter(record: Record, **thresholds) -> FilterVerdict:
    return BoilerplateFilter(**thresholds).fit().verdict(record)

"""Reference-based MT metrics: corpus BLEU, ROUGE-L, exact match, t intervals."""

from __future__ import annotations

import math
import statistics
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import regex
from scipy import stats

from .corpus import normalize_text

TOKENIZER_VERSION = "words-punct-v1"
_WORD_TOKEN = regex.compile(r"[\p{L}\p{N}\p{M}_]+|[^\s\p{L}\p{N}\p{M}_]")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalPair:
    hypothesis: str
    references: tuple[str, ...]

    def __post_init__(self):
        refs = (self.references,) if isinstance(self.references, str) else tuple(self.references)
        if not refs:
            raise MetricError("an EvalPair needs at least one reference")
        object.__setattr__(self, "references", refs)


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    n: int
    ci_low: float | None = None
    ci_high: float | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = {"name": self.name, "value": self.value, "n": self.n}
        if self.ci_low is not None:
            out["ci_low"] = self.ci_low
            out["ci_high"] = self.ci_high
        if self.meta:
            out["meta"] = dict(self.meta)
        return out


def word_tokenize(text: str) -> list[str]:
    """Case-preserving; punctuation marks become separate tokens."""
    return _WORD_TOKEN.findall(text)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_corpus(pairs: Iterable[EvalPair], max_n: int = 4, smoothing: str = "add-one") -> MetricResult:
    """Corpus BLEU in [0, 100] with clipped n-gram counts pooled over all pairs.

    Orders for which the hypotheses contain no n-grams at all are dropped and
    the remaining weights renormalized, so BLEU(h, h) is 100 even for
    hypotheses shorter than ``max_n``. With ``smoothing="add-one"``, if any
    order has zero matches then orders n >= 2 use (matches + 1) / (total + 1).
    """
    if smoothing not in ("add-one", "none"):
        raise MetricError(f"unknown smoothing {smoothing!r}")
    pairs = list(pairs)
    if not pairs:
        raise MetricError("BLEU needs at least one hypothesis")

    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for pair in pairs:
        hyp = word_tokenize(pair.hypothesis)
        refs = [word_tokenize(r) for r in pair.references]
        hyp_len += len(hyp)
        ref_len += min((len(r) for r in refs), key=lambda rl: (abs(rl - len(hyp)), rl))
        for n in range(1, max_n + 1):
            counts = ngrams(hyp, n)
            if not counts:
                continue
            max_ref: Counter = Counter()
            for ref in refs:
                max_ref |= ngrams(ref, n)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += sum(counts.values())

    orders = [i for i in range(max_n) if totals[i] > 0]
    meta = {
        "smoothing": smoothing,
        "smoothing_applied": False,
        "tokenizer": TOKENIZER_VERSION,
        "max_n": max_n,
        "effective_order": len(orders),
        "matches": matches,
        "totals": totals,
        "hyp_len": hyp_len,
        "ref_len": ref_len,
    }
    if not orders:
        return MetricResult("bleu", 0.0, len(pairs), meta=meta)

    m = [matches[i] for i in orders]
    t = [totals[i] for i in orders]
    if any(x == 0 for x in m):
        if smoothing == "none" or m[0] == 0:
            meta["brevity_penalty"] = _brevity_penalty(hyp_len, ref_len)
            return MetricResult("bleu", 0.0, len(pairs), meta=meta)
        meta["smoothing_applied"] = True
        m = [m[0]] + [x + 1 for x in m[1:]]
        t = [t[0]] + [x + 1 for x in t[1:]]

    weight = 1.0 / len(orders)
    log_avg = math.fsum(weight * math.log(mi / ti) for mi, ti in zip(m, t))
    bp = _brevity_penalty(hyp_len, ref_len)
    meta["brevity_penalty"] = bp
    meta["precisions"] = [mi / ti for mi, ti in zip(m, t)]
    return MetricResult("bleu", min(100.0, 100.0 * bp * math.exp(log_avg)), len(pairs), meta=meta)


def _brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(pair: EvalPair, beta: float = 1.2) -> tuple[float, float, float]:
    """(precision, recall, F) from the LCS against the first reference."""
    hyp = word_tokenize(pair.hypothesis)
    ref = word_tokenize(pair.references[0])
    if not hyp or not ref:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0, 0.0, 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    b2 = beta * beta
    f = (1 + b2) * r * p / (r + b2 * p)
    return p, r, f


def rouge_l_corpus(pairs: Iterable[EvalPair], beta: float = 1.2, confidence: float = 0.95) -> MetricResult:
    scores = [rouge_l(p, beta)[2] * 100.0 for p in pairs]
    if not scores:
        raise MetricError("ROUGE-L needs at least one pair")
    meta = {"beta": beta, "tokenizer": TOKENIZER_VERSION}
    if len(scores) < 2:
        return MetricResult("rouge-l", scores[0], 1, meta=meta)
    ci = mean_with_t_ci(scores, confidence)
    return MetricResult("rouge-l", ci.value, ci.n, ci.ci_low, ci.ci_high, {**meta, **ci.meta})


def exact_match_rate(pairs: Iterable[EvalPair]) -> float:
    pairs = list(pairs)
    if not pairs:
        return 0.0
    hits = 0
    for pair in pairs:
        hyp = normalize_text(pair.hypothesis)
        if any(hyp == normalize_text(r) for r in pair.references):
            hits += 1
    return hits / len(pairs)


def mean_with_t_ci(scores: Sequence[float], confidence: float = 0.95) -> MetricResult:
    """Mean with a two-sided Student-t confidence interval."""
    scores = list(scores)
    n = len(scores)
    if n < 2:
        raise MetricError("a t interval needs at least two scores")
    if not 0.0 <= confidence < 1.0:
        raise MetricError(f"confidence must lie in [0, 1), got {confidence}")
    mean = float(statistics.mean(scores))
    sd = statistics.stdev(scores)
    t_crit = float(stats.t.ppf((1.0 + confidence) / 2.0, n - 1))
    half = t_crit * sd / math.sqrt(n)
    meta = {"confidence": confidence, "t_quantile": t_crit, "stdev": sd, "half_width": half}
    return MetricResult("mean", mean, n, mean - half, mean + half, meta)

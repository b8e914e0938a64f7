"""Two-class language-variety identification and the VID score.

:class:`VarietyClassifier` is a multinomial Naive Bayes model over character
1-4-grams and word unigrams, following the sklearn estimator API.
"""

from __future__ import annotations

import io
import json
import zipfile
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import Document, Variety
from .errors import DataError

MODEL_FORMAT = "retrocorpus-variety-nb"
MODEL_VERSION = 1
CLASSES = (Variety.TARGET.value, Variety.OTHER.value)


def extract_features(text: str, char_ngrams: tuple[int, int] = (1, 4), word_unigrams: bool = True) -> Counter:
    """Character n-grams (over the text padded with spaces) and ``w:``-prefixed words."""
    lo, hi = char_ngrams
    padded = f" {text.casefold()} "
    feats: Counter = Counter()
    for n in range(lo, hi + 1):
        for i in range(len(padded) - n + 1):
            feats["c:" + padded[i:i + n]] += 1
    if word_unigrams:
        for w in text.casefold().split():
            feats["w:" + w] += 1
    return feats


def _check_texts(X) -> list[str]:
    if isinstance(X, (str, bytes)):
        raise ValueError("expected a sequence of texts, got a single string")
    texts = [d.text if isinstance(d, Document) else d for d in X]
    for t in texts:
        if not isinstance(t, str):
            raise ValueError(f"expected text, got {type(t).__name__}")
    return texts


def _check_labels(y) -> list[str]:
    labels = [Variety(v).value for v in y]
    bad = set(labels) - set(CLASSES)
    if bad:
        raise DataError(f"training labels must be {CLASSES}, got {sorted(bad)}")
    return labels


class VarietyClassifier(ClassifierMixin, BaseEstimator):
    """Multinomial Naive Bayes with Laplace-``alpha`` smoothing.

    Ties in the posterior go to the target variety.
    """

    def __init__(self, alpha=1.0, char_ngrams=(1, 4), word_unigrams=True):
        self.alpha = alpha
        self.char_ngrams = char_ngrams
        self.word_unigrams = word_unigrams

    def fit(self, X, y):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        texts = _check_texts(X)
        labels = _check_labels(y)
        if len(texts) != len(labels):
            raise ValueError("X and y differ in length")
        per_class = {c: Counter() for c in CLASSES}
        doc_counts = Counter(labels)
        for c in CLASSES:
            if doc_counts[c] == 0:
                raise DataError(f"no training documents for class {c!r}")
        for text, label in zip(texts, labels):
            per_class[label].update(self._features(text))

        vocab = sorted(set().union(*per_class.values()))
        self.vocabulary_ = {f: i for i, f in enumerate(vocab)}
        counts = np.zeros((len(CLASSES), len(vocab)))
        for k, c in enumerate(CLASSES):
            for f, n in per_class[c].items():
                counts[k, self.vocabulary_[f]] = n
        self._set_counts(counts, np.array([doc_counts[c] for c in CLASSES], dtype=float))
        self.n_features_in_ = len(vocab)
        return self

    def _set_counts(self, feature_counts: np.ndarray, class_counts: np.ndarray):
        self.classes_ = np.array(CLASSES)
        self.feature_count_ = feature_counts
        self.class_count_ = class_counts
        self.class_log_prior_ = np.log(class_counts) - np.log(class_counts.sum())
        smoothed = feature_counts + self.alpha
        self.feature_log_prob_ = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))

    def _features(self, text: str) -> Counter:
        return extract_features(text, tuple(self.char_ngrams), self.word_unigrams)

    def _joint_log_likelihood(self, texts: Sequence[str]) -> np.ndarray:
        check_is_fitted(self, "feature_log_prob_")
        out = np.empty((len(texts), len(CLASSES)))
        for i, text in enumerate(texts):
            if not text.strip():
                raise DataError("cannot classify empty text")
            idx, cnt = [], []
            for f, n in self._features(text).items():
                j = self.vocabulary_.get(f)
                if j is not None:
                    idx.append(j)
                    cnt.append(n)
            out[i] = self.class_log_prior_ + self.feature_log_prob_[:, idx] @ np.array(cnt, dtype=float)
        return out

    def decision_function(self, X) -> np.ndarray:
        """Log-odds of target over other variety; >= 0 means target."""
        jll = self._joint_log_likelihood(_check_texts(X))
        return jll[:, 0] - jll[:, 1]

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, CLASSES[0], CLASSES[1])

    def predict_log_proba(self, X) -> np.ndarray:
        jll = self._joint_log_likelihood(_check_texts(X))
        return jll - np.logaddexp(jll[:, 0], jll[:, 1])[:, None]

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(self.predict_log_proba(X))

    def classify(self, text: str) -> tuple[str, float]:
        odds = float(self.decision_function([text])[0])
        return (CLASSES[0] if odds >= 0 else CLASSES[1]), odds

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path, metadata: dict | None = None) -> None:
        """Zip archive: ``model.json`` (version, params, vocabulary) plus one ``.npy`` per count array."""
        check_is_fitted(self, "feature_log_prob_")
        vocab = sorted(self.vocabulary_, key=self.vocabulary_.get)
        header = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": {"alpha": self.alpha, "char_ngrams": list(self.char_ngrams),
                       "word_unigrams": self.word_unigrams},
            "classes": list(CLASSES),
            "vocabulary": vocab,
            "metadata": metadata or {},
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr(_fixed_info("model.json"),
                        json.dumps(header, ensure_ascii=False, sort_keys=True))
            for name, arr in (("feature_count", self.feature_count_), ("class_count", self.class_count_)):
                buf = io.BytesIO()
                np.save(buf, arr, allow_pickle=False)
                zf.writestr(_fixed_info(f"{name}.npy"), buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "VarietyClassifier":
        try:
            with zipfile.ZipFile(path) as zf:
                header = json.loads(zf.read("model.json"))
                feature_count = np.load(io.BytesIO(zf.read("feature_count.npy")), allow_pickle=False)
                class_count = np.load(io.BytesIO(zf.read("class_count.npy")), allow_pickle=False)
        except (OSError, KeyError, zipfile.BadZipFile, ValueError) as exc:
            raise DataError(f"cannot load variety model {path}: {exc}") from None
        if header.get("format") != MODEL_FORMAT or header.get("version") != MODEL_VERSION:
            raise DataError(f"{path}: unsupported model format {header.get('format')!r} "
                            f"v{header.get('version')}")
        p = header["params"]
        model = cls(alpha=p["alpha"], char_ngrams=tuple(p["char_ngrams"]), word_unigrams=p["word_unigrams"])
        model.vocabulary_ = {f: i for i, f in enumerate(header["vocabulary"])}
        model.n_features_in_ = len(model.vocabulary_)
        model._set_counts(feature_count, class_count)
        model.metadata_ = header.get("metadata", {})
        return model


def _fixed_info(name: str) -> zipfile.ZipInfo:
    # Constant timestamp keeps saved models byte-reproducible.
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def train_classifier(docs: Iterable[Document], alpha: float = 1.0) -> VarietyClassifier:
    docs = [d for d in docs]
    return VarietyClassifier(alpha=alpha).fit([d.text for d in docs], [d.variety for d in docs])


def classify(doc: Document | str, model: VarietyClassifier) -> tuple[str, float]:
    text = doc.text if isinstance(doc, Document) else doc
    return model.classify(text)


@dataclass(frozen=True)
class VidResult:
    pct_ep_hyp: float
    pct_ep_ref: float
    vid: float | None
    n: int

    def to_dict(self):
        return {"pct_ep_hyp": self.pct_ep_hyp, "pct_ep_ref": self.pct_ep_ref, "vid": self.vid, "n": self.n}


class UndefinedVidError(DataError):
    def __init__(self, pct_ep_hyp: float, n: int):
        super().__init__("VID undefined: no reference is classified as the target variety "
                         f"(hypotheses: {pct_ep_hyp:.4f})")
        self.result = VidResult(pct_ep_hyp, 0.0, None, n)


def target_fraction(texts: Sequence[str], model) -> float:
    labels = model.predict(list(texts))
    return float(np.count_nonzero(labels == CLASSES[0])) / len(texts)


def vid_score(hyp_docs: Sequence[Document | str], ref_docs: Sequence[Document | str], model) -> VidResult:
    """Share of hypotheses labeled target-variety divided by the same share for references.

    Raises :class:`UndefinedVidError` (carrying both percentages) when no
    reference is labeled target-variety.
    """
    if len(hyp_docs) != len(ref_docs):
        raise DataError(f"hyp and ref differ in length: {len(hyp_docs)} vs {len(ref_docs)}")
    if not hyp_docs:
        raise DataError("VID needs at least one document")
    for h, r in zip(hyp_docs, ref_docs):
        if isinstance(h, Document) and isinstance(r, Document) and h.id != r.id:
            raise DataError(f"hyp/ref misaligned at id {h.id!r} vs {r.id!r}")
    hyp = [d.text if isinstance(d, Document) else d for d in hyp_docs]
    ref = [d.text if isinstance(d, Document) else d for d in ref_docs]
    p_hyp = target_fraction(hyp, model)
    p_ref = target_fraction(ref, model)
    if p_ref == 0:
        raise UndefinedVidError(p_hyp, len(hyp))
    return VidResult(p_hyp, p_ref, p_hyp / p_ref, len(hyp))


class ExternalLabels:
    """Adapter for labels produced by an external classifier (id -> label JSONL)."""

    def __init__(self, labels: dict[str, str]):
        self.labels = labels

    @classmethod
    def from_jsonl(cls, path) -> "ExternalLabels":
        labels = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    labels[str(row["id"])] = Variety(row["label"]).value
        return cls(labels)

    def fraction(self, ids: Sequence[str]) -> float:
        try:
            return sum(1 for i in ids if self.labels[i] == CLASSES[0]) / len(ids)
        except KeyError as exc:
            raise DataError(f"no external label for id {exc.args[0]!r}") from None


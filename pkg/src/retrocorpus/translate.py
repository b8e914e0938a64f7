"""Retro-translation gateway: pluggable backends, disk cache, retries, audit."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import httpx
import yaml

from .corpus import Document, ParallelPair, normalize_text
from .errors import ConfigError, DataError
from .metrics import EvalPair, bleu_corpus

logger = logging.getLogger(__name__)

KINDS = ("http-service", "mock-identity", "mock-table")


@dataclass(frozen=True)
class Direction:
    source_lang: str = "pt-PT"
    target_lang: str = "en"

    def __str__(self):
        return f"{self.source_lang}->{self.target_lang}"

    @classmethod
    def parse(cls, value: str) -> "Direction":
        src, sep, tgt = value.partition("->")
        if not sep:
            src, sep, tgt = value.partition(":")
        if not (src and tgt):
            raise ConfigError(f"direction must look like 'pt-PT->en', got {value!r}")
        return cls(src.strip(), tgt.strip())


@dataclass(frozen=True)
class BackendSpec:
    backend_id: str
    kind: str = "mock-identity"
    url: str = ""
    auth_header: str = "Authorization"
    auth_env: str = ""
    timeout: float = 30.0
    rate_limit: float = 5.0
    max_retries: int = 3
    backoff_ms: int = 500
    concurrency: int = 4
    table: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}; expected one of {KINDS}")
        if not self.backend_id:
            raise ConfigError("backend_id must be non-empty")
        if self.rate_limit <= 0:
            raise ConfigError("rate_limit must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.kind == "http-service" and not self.url:
            raise ConfigError("http-service backend needs a url")

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: str | Path = ".") -> "BackendSpec":
        data = dict(data)
        table = dict(data.pop("table", None) or {})
        table_path = data.pop("table_path", None)
        if table_path:
            p = Path(table_path)
            p = p if p.is_absolute() else Path(base_dir) / p
            try:
                with open(p, encoding="utf-8") as fh:
                    table.update(json.load(fh))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot load translation table {p}: {exc}") from None
        allowed = {f for f in cls.__dataclass_fields__} - {"table"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown backend key(s): {sorted(unknown)}")
        if "backend_id" not in data:
            data["backend_id"] = data.get("kind", "mock-identity")
        try:
            return cls(table={normalize_text(k): v for k, v in table.items()}, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, value: str) -> "BackendSpec":
        """A YAML/JSON backend file, or a bare kind name such as ``mock-identity``."""
        if value in ("mock-identity",):
            return cls(backend_id=value, kind=value)
        try:
            with open(value, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot load backend spec {value}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"backend spec {value} must be a mapping")
        return cls.from_dict(data, Path(value).parent)


class BackendError(Exception):
    def __init__(self, message: str, retryable: bool, status: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.status = status


class Backend:
    def __init__(self, spec: BackendSpec):
        self.spec = spec
        self.calls = 0

    def translate(self, text: str, direction: Direction) -> str:
        self.calls += 1
        return self._translate(text, direction)

    def _translate(self, text: str, direction: Direction) -> str:
        raise NotImplementedError

    def close(self):
        pass


class IdentityBackend(Backend):
    def _translate(self, text, direction):
        return text


class TableBackend(Backend):
    def _translate(self, text, direction):
        try:
            return self.spec.table[normalize_text(text)]
        except KeyError:
            raise BackendError("text not in translation table", retryable=False, status=404) from None


class HttpBackend(Backend):
    """POST {text, source_lang, target_lang} -> {translation}."""

    def __init__(self, spec: BackendSpec, client: httpx.Client | None = None):
        super().__init__(spec)
        headers = {}
        if spec.auth_env:
            token = os.environ.get(spec.auth_env)
            if token is None:
                raise ConfigError(f"environment variable {spec.auth_env} is not set")
            headers[spec.auth_header] = token
        self.client = client or httpx.Client(timeout=spec.timeout, headers=headers)

    def _translate(self, text, direction):
        url = self.spec.url.format(source_lang=direction.source_lang, target_lang=direction.target_lang)
        body = {"text": text, "source_lang": direction.source_lang, "target_lang": direction.target_lang}
        try:
            resp = self.client.post(url, json=body)
        except httpx.TimeoutException as exc:
            raise BackendError(f"timeout: {exc}", retryable=True) from None
        except httpx.TransportError as exc:
            raise BackendError(f"transport error: {exc}", retryable=True) from None
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(f"HTTP {resp.status_code}", retryable=True, status=resp.status_code)
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}", retryable=False, status=resp.status_code)
        try:
            return str(resp.json()["translation"])
        except (ValueError, KeyError, TypeError):
            raise BackendError("response lacks a 'translation' field", retryable=False,
                               status=resp.status_code) from None

    def close(self):
        self.client.close()


def make_backend(spec: BackendSpec) -> Backend:
    if spec.kind == "mock-identity":
        return IdentityBackend(spec)
    if spec.kind == "mock-table":
        return TableBackend(spec)
    return HttpBackend(spec)


class RateLimiter:
    """Spaces request starts at least ``1 / rate`` seconds apart, across threads."""

    def __init__(self, rate: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.interval = 1.0 / rate
        self.clock = clock
        self.sleep = sleep
        self._next = None
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            now = self.clock()
            slot = now if self._next is None or self._next <= now else self._next
            self._next = slot + self.interval
        if slot > now:
            self.sleep(slot - now)


class TranslationCache:
    """Write-once on-disk cache keyed by sha256(backend_id, direction, text)."""

    def __init__(self, root: str | Path | None):
        self.root = Path(root) if root else None
        self._mem: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.root:
            self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(backend_id: str, direction: Direction, text: str) -> str:
        blob = "\x00".join([backend_id, str(direction), normalize_text(text)])
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> str | None:
        if key in self._mem:
            return self._mem[key]
        if not self.root:
            return None
        try:
            with open(self._path(key), encoding="utf-8") as fh:
                entry = json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            logger.warning("ignoring unreadable cache entry %s", key)
            return None
        self._mem[key] = entry["value"]
        return entry["value"]

    def put(self, key: str, value: str) -> None:
        with self._lock:
            if key in self._mem:
                return
            self._mem[key] = value
            if not self.root:
                return
            path = self._path(key)
            if path.exists():
                return
            path.parent.mkdir(exist_ok=True)
            entry = {"key": key, "value": value,
                     "timestamp": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")}
            tmp = path.with_suffix(f".tmp{threading.get_ident()}")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False)
            os.replace(tmp, path)


@dataclass(frozen=True)
class DeadLetter:
    id: str
    text: str
    error: str
    attempts: int
    status: int | None = None

    def to_dict(self):
        return {"id": self.id, "text": self.text, "error": self.error,
                "attempts": self.attempts, "status": self.status}


@dataclass
class TranslateStats:
    docs: int = 0
    pairs: int = 0
    dead: int = 0
    cache_hits: int = 0
    backend_calls: int = 0

    def to_dict(self):
        return dict(self.__dict__)


class Translator:
    """Translate Documents into ParallelPairs, consulting the cache first.

    Requests run in up to ``spec.concurrency`` threads under a shared rate
    limiter; output keeps input order. Items that still fail after retries
    go to ``dead_letters`` instead of the output.
    """

    def __init__(self, spec: BackendSpec, cache: TranslationCache | None = None,
                 direction: Direction = Direction(), backend: Backend | None = None,
                 created_at: datetime | None = None, sleep: Callable[[float], None] = time.sleep):
        self.spec = spec
        self.cache = cache or TranslationCache(None)
        self.direction = direction
        self.backend = backend or make_backend(spec)
        self.created_at = created_at
        self.sleep = sleep
        self.limiter = RateLimiter(spec.rate_limit, sleep=sleep)
        self.dead_letters: list[DeadLetter] = []
        self.stats = TranslateStats()
        self._stats_lock = threading.Lock()

    def _call(self, text: str) -> tuple[str | None, BackendError | None, int]:
        attempt = 0
        while True:
            attempt += 1
            self.limiter.acquire()
            with self._stats_lock:
                self.stats.backend_calls += 1
            try:
                return self.backend.translate(text, self.direction), None, attempt
            except BackendError as exc:
                if not exc.retryable or attempt > self.spec.max_retries:
                    return None, exc, attempt
                delay = self.spec.backoff_ms * (2 ** (attempt - 1)) / 1000.0
                logger.info("retrying after %s (attempt %d, sleeping %.2fs)", exc, attempt, delay)
                self.sleep(delay)

    def _one(self, doc: Document) -> ParallelPair | DeadLetter:
        key = self.cache.key(self.spec.backend_id, self.direction, doc.text)
        value = self.cache.get(key)
        if value is not None:
            with self._stats_lock:
                self.stats.cache_hits += 1
        else:
            value, error, attempts = self._call(doc.text)
            if error is not None:
                return DeadLetter(doc.id, doc.text, str(error), attempts, error.status)
            value = normalize_text(value)
            if not value:
                return DeadLetter(doc.id, doc.text, "empty translation", attempts)
            self.cache.put(key, value)
        created = self.created_at or datetime.now(timezone.utc).replace(microsecond=0)
        return ParallelPair(doc.id, value, doc.text, doc.domain, self.spec.backend_id, created,
                            dict(doc.meta))

    def translate_batch(self, docs: Iterable[Document]) -> Iterator[ParallelPair]:
        workers = self.spec.concurrency
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batch: list[Document] = []
            for doc in docs:
                batch.append(doc)
                if len(batch) >= 256 * workers:
                    yield from self._emit(pool.map(self._one, batch))
                    batch = []
            if batch:
                yield from self._emit(pool.map(self._one, batch))

    def _emit(self, results):
        for item in results:
            self.stats.docs += 1
            if isinstance(item, DeadLetter):
                self.stats.dead += 1
                self.dead_letters.append(item)
                logger.warning("dead-letter %s: %s", item.id, item.error)
            else:
                self.stats.pairs += 1
                yield item


def translate_batch(docs: Iterable[Document], backend: BackendSpec, direction: Direction = Direction(),
                    cache: TranslationCache | None = None, **kwargs) -> tuple[list[ParallelPair], list[DeadLetter]]:
    translator = Translator(backend, cache, direction, **kwargs)
    pairs = list(translator.translate_batch(docs))
    return pairs, translator.dead_letters


@dataclass(frozen=True)
class AuditReport:
    n: int
    exact_match_rate: float
    bleu: float

    def to_dict(self):
        return {"n": self.n, "exact_match_rate": self.exact_match_rate, "bleu": self.bleu}


def variety_invariance_audit(pairs_a: Sequence[ParallelPair], pairs_b: Sequence[ParallelPair]) -> AuditReport:
    """Compare rich-language translations produced from two varieties of the same texts."""
    if len(pairs_a) != len(pairs_b):
        raise DataError(f"audit corpora differ in length: {len(pairs_a)} vs {len(pairs_b)}")
    if not pairs_a:
        raise DataError("audit needs at least one pair")
    for a, b in zip(pairs_a, pairs_b):
        if a.id != b.id:
            raise DataError(f"audit corpora misaligned at id {a.id!r} (other side has {b.id!r})")
    same = sum(1 for a, b in zip(pairs_a, pairs_b)
               if normalize_text(a.source_text) == normalize_text(b.source_text))
    bleu = bleu_corpus([EvalPair(a.source_text, (b.source_text,)) for a, b in zip(pairs_a, pairs_b)])
    return AuditReport(len(pairs_a), same / len(pairs_a), bleu.value)

"""Filter pipeline configuration and the funnel runner."""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import islice
from pathlib import Path
from typing import Any

import yaml

from .corpus import ParallelPair, Record
from .errors import ConfigError
from .filters import (
    DEFAULT_PREFIXES,
    ORDINAL_INDICATORS,
    STAGES,
    BoilerplateFilter,
    CharsetFilter,
    DuplicateFilter,
    FilterVerdict,
    LengthFilter,
    MiscFilter,
    PatternFilter,
    load_stopwords,
    parse_blocklist,
)
from .tokenization import TokenizerError, TokenizerSpec, load_tokenizer

CHUNK = 4096


@dataclass
class PipelineConfig:
    enabled: dict[str, bool] = field(default_factory=lambda: {s: True for s in STAGES})
    length_low: int = 15
    length_high: int = 70
    density_low: float = 0.25
    density_high: float = 0.32
    keep_fraction: float = 0.5
    stopwords_path: str | None = None
    prefixes: list[str] = field(default_factory=lambda: list(DEFAULT_PREFIXES))
    patterns: list[str] = field(default_factory=list)
    blocklist_path: str | None = None
    extra_letters: str = ORDINAL_INDICATORS
    allow_non_letters: bool = True
    max_total_tokens: int = 900
    tokenizer: str = "whitespace"

    def __post_init__(self):
        unknown = set(self.enabled) - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stage(s) {sorted(unknown)}; stages are {list(STAGES)}")
        self.enabled = {s: bool(self.enabled.get(s, True)) for s in STAGES}
        if self.max_total_tokens <= 0:
            raise ConfigError("max_total_tokens must be positive")
        for label, path in (("stopwords", self.stopwords_path), ("blocklist", self.blocklist_path)):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None, base_dir: str | Path = ".") -> "PipelineConfig":
        """Build from the YAML layout documented in the README."""
        data = dict(data or {})
        base = Path(base_dir)
        known = {"stages", "boilerplate", "charset", "patterns", "length", "tokenizer"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config key(s): {sorted(extra)}")
        bp = dict(data.get("boilerplate") or {})
        cs = dict(data.get("charset") or {})
        pt = dict(data.get("patterns") or {})
        ln = dict(data.get("length") or {})

        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() else base / p)

        try:
            return cls(
                enabled=dict(data.get("stages") or {}),
                length_low=int(bp.get("length_low", 15)),
                length_high=int(bp.get("length_high", 70)),
                density_low=float(bp.get("density_low", 0.25)),
                density_high=float(bp.get("density_high", 0.32)),
                keep_fraction=float(bp.get("keep_fraction", 0.5)),
                stopwords_path=resolve(bp.get("stopwords")),
                prefixes=list(pt.get("prefixes", DEFAULT_PREFIXES)),
                patterns=list(pt.get("regexes", [])),
                blocklist_path=resolve(pt.get("blocklist")),
                extra_letters=str(cs.get("extra_letters", ORDINAL_INDICATORS)),
                allow_non_letters=bool(cs.get("allow_non_letters", True)),
                max_total_tokens=int(ln.get("max_total_tokens", 900)),
                tokenizer=_resolve_tokenizer(data.get("tokenizer", "whitespace"), base),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(data, Path(path).parent)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def build_stages(self) -> dict[str, Any]:
        stop = load_stopwords(self.stopwords_path) if self.stopwords_path else None
        prefixes, patterns = list(self.prefixes), list(self.patterns)
        if self.blocklist_path:
            with open(self.blocklist_path, encoding="utf-8") as fh:
                more_prefixes, more_patterns = parse_blocklist(fh)
            prefixes += more_prefixes
            patterns += more_patterns
        try:
            tokenizer = load_tokenizer(self.tokenizer)
        except TokenizerError as exc:
            raise ConfigError(str(exc)) from None
        stages = {
            "boilerplate": BoilerplateFilter(self.length_low, self.length_high, self.density_low,
                                             self.density_high, self.keep_fraction, stop),
            "duplicates": DuplicateFilter(),
            "invalid-chars": CharsetFilter(self.extra_letters, self.allow_non_letters),
            "patterns": PatternFilter(tuple(prefixes), tuple(patterns)),
            "length": LengthFilter(tokenizer, self.max_total_tokens),
            "misc": MiscFilter(),
        }
        for stage in stages.values():
            stage.fit()
        return stages


def _resolve_tokenizer(value: str, base: Path) -> str:
    value = str(value)
    if value.startswith("bpe:"):
        p = Path(value[4:])
        p = p if p.is_absolute() else base / p
        if not p.is_dir():
            raise ConfigError(f"tokenizer directory not found: {p}")
        return f"bpe:{p}"
    try:
        TokenizerSpec.parse(value)
    except TokenizerError as exc:
        raise ConfigError(str(exc)) from None
    return value


@dataclass
class FunnelReport:
    initial: int
    stages: list[tuple[str, int]] = field(default_factory=list)

    @property
    def final(self) -> int:
        return self.stages[-1][1] if self.stages else self.initial

    def counts(self) -> list[int]:
        return [self.initial] + [n for _, n in self.stages]

    def drops(self) -> dict[str, int]:
        out = {}
        prev = self.initial
        for name, remaining in self.stages:
            out[name] = prev - remaining
            prev = remaining
        return out

    def to_dict(self) -> dict[str, Any]:
        drops = self.drops()
        return {
            "initial": self.initial,
            "stages": [{"name": n, "remaining": r, "dropped": drops[n]} for n, r in self.stages],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FunnelReport":
        return cls(int(data["initial"]), [(s["name"], int(s["remaining"])) for s in data["stages"]])


@dataclass
class PipelineResult:
    kept: list[Record]
    report: FunnelReport
    verdicts: list[FilterVerdict]


# Worker-process state, set once per process by the pool initializer.
_WORKER_STAGES: list = []


def _init_worker(stages):
    global _WORKER_STAGES
    _WORKER_STAGES = stages


def _pure_verdicts(record: Record, stages) -> list[FilterVerdict]:
    """Evaluate pure stages in order, stopping at the first drop."""
    out = []
    for stage in stages:
        v = stage.verdict(record)
        out.append(v)
        if not v.kept:
            break
    return out


def _worker_eval(record: Record) -> tuple[list[FilterVerdict], list[FilterVerdict]]:
    pre, post = _WORKER_STAGES
    return _pure_verdicts(record, pre), _pure_verdicts(record, post)


def _chunks(it: Iterable[Record], size: int) -> Iterator[list[Record]]:
    it = iter(it)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def active_stages(config: PipelineConfig, pairs: bool) -> list[str]:
    """Enabled stages in funnel order; ``length`` only runs on parallel pairs."""
    return [s for s in STAGES if config.enabled[s] and (s != "length" or pairs)]


def run_pipeline(records: Iterable[Record], config: PipelineConfig | None = None,
                 workers: int = 1) -> PipelineResult:
    """Run the funnel over ``records`` and account for every drop.

    Pure stages may be evaluated in ``workers`` processes; deduplication is
    always applied sequentially in input order, so results do not depend on
    the worker count.
    """
    config = config or PipelineConfig()
    stages = config.build_stages()
    records = iter(records)
    first = next(records, None)
    if first is None:
        names = active_stages(config, pairs=False)
        return PipelineResult([], FunnelReport(0, [(n, 0) for n in names]), [])
    is_pairs = isinstance(first, ParallelPair)
    names = active_stages(config, is_pairs)
    dedup = stages["duplicates"] if "duplicates" in names else None
    split = names.index("duplicates") if dedup else len(names)
    pre = [stages[n] for n in names[:split]]
    post = [stages[n] for n in names[split + 1:]] if dedup else []

    drops = {n: 0 for n in names}
    kept: list[Record] = []
    verdicts: list[FilterVerdict] = []
    total = 0

    def consume(record, pre_v, post_v):
        verdicts.extend(pre_v)
        if pre_v and not pre_v[-1].kept:
            drops[pre_v[-1].stage] += 1
            return
        if dedup is not None:
            dv = dedup.verdict(record)
            verdicts.append(dv)
            if not dv.kept:
                drops["duplicates"] += 1
                return
        verdicts.extend(post_v)
        if post_v and not post_v[-1].kept:
            drops[post_v[-1].stage] += 1
            return
        kept.append(record)

    def stream():
        yield first
        for r in records:
            if isinstance(r, ParallelPair) != is_pairs:
                raise TypeError("cannot mix documents and parallel pairs in one run")
            yield r

    if workers <= 1:
        for record in stream():
            total += 1
            consume(record, _pure_verdicts(record, pre), _pure_verdicts(record, post))
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=((pre, post),)) as pool:
            for chunk in _chunks(stream(), CHUNK):
                size = max(1, len(chunk) // (workers * 4))
                for record, (pre_v, post_v) in zip(chunk, pool.map(_worker_eval, chunk, chunksize=size)):
                    total += 1
                    consume(record, pre_v, post_v)

    remaining = total
    rows = []
    for n in names:
        remaining -= drops[n]
        rows.append((n, remaining))
    return PipelineResult(kept, FunnelReport(total, rows), verdicts)

"""Load source corpora into Documents and apply variety-label selection."""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .corpus import (
    Document,
    DomainTag,
    Utf8DecodeError,
    Variety,
    decode_utf8,
    normalize_text,
    parse_domain,
    parse_variety,
)
from .errors import ConfigError

logger = logging.getLogger(__name__)

FORMATS = ("jsonl", "csv", "plain-text-per-line")
DOC_FIELDS = ("id", "text", "variety", "domain", "source")


@dataclass(frozen=True)
class IngestSpec:
    path: str
    format: str = "jsonl"
    fields: dict[str, str] = field(default_factory=lambda: {"text": "text"})
    default_domain: DomainTag = DomainTag.OTHER
    source: str = ""
    accept: frozenset[Variety] | None = None
    variety_aliases: dict[str, str] = field(default_factory=dict)
    default_variety: Variety = Variety.UNLABELED

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}; expected one of {FORMATS}")
        if self.format != "plain-text-per-line" and "text" not in self.fields:
            raise ConfigError("field mapping must bind the text field")
        bad = set(self.fields) - set(DOC_FIELDS)
        if bad:
            raise ConfigError(f"cannot map unknown Document field(s) {sorted(bad)}")
        for label in self.variety_aliases.values():
            try:
                Variety(label)
            except ValueError:
                raise ConfigError(f"alias target {label!r} is not a variety") from None

    @property
    def source_name(self) -> str:
        return self.source or Path(self.path).stem

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: str | Path = ".") -> "IngestSpec":
        data = dict(data)
        if "path" not in data:
            raise ConfigError("ingest spec needs a 'path'")
        path = Path(data["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        accept = data.get("accept")
        try:
            return cls(
                path=str(path),
                format=data.get("format", "jsonl"),
                fields=dict(data.get("fields") or {"text": "text"}),
                default_domain=parse_domain(data.get("default_domain")),
                source=str(data.get("source", "")),
                accept=None if accept is None else frozenset(Variety(a) for a in accept),
                variety_aliases=dict(data.get("variety_aliases") or {}),
                default_variety=Variety(data.get("default_variety", "unlabeled")),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "IngestSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot load ingest spec {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"ingest spec {path} must be a mapping")
        return cls.from_dict(data, Path(path).parent)


@dataclass(frozen=True)
class IngestError:
    line: int
    reason: str

    def to_dict(self):
        return {"line": self.line, "reason": self.reason}


@dataclass
class IngestStats:
    rows: int = 0
    errors: list[IngestError] = field(default_factory=list)
    dropped_by_label: int = 0
    kept: int = 0

    def to_dict(self):
        return {
            "rows": self.rows,
            "kept": self.kept,
            "dropped_by_label": self.dropped_by_label,
            "errors": len(self.errors),
        }


def _raw_rows(spec: IngestSpec) -> Iterator[tuple[int, dict[str, Any] | None, str | None]]:
    """Yield (line number, mapped row or None, error or None) for non-blank rows."""
    if spec.format == "csv":
        yield from _csv_rows(spec)
        return
    with open(spec.path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = decode_utf8(raw)
            except Utf8DecodeError as exc:
                yield lineno, None, str(exc)
                continue
            if not line.strip():
                continue
            if spec.format == "plain-text-per-line":
                yield lineno, {"text": line}, None
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"malformed JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield lineno, None, "JSON row is not an object"
                continue
            missing = [k for k in spec.fields.values() if k not in obj]
            if spec.fields.get("text") in missing:
                yield lineno, None, f"missing field {spec.fields['text']!r}"
                continue
            row = {f: obj[k] for f, k in spec.fields.items() if k in obj}
            mapped = set(spec.fields.values())
            row["_extra"] = {k: v for k, v in obj.items() if k not in mapped}
            yield lineno, row, None


def _csv_rows(spec: IngestSpec):
    with open(spec.path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        missing = [k for k in spec.fields.values() if k not in header]
        if missing:
            raise ConfigError(f"CSV header lacks mapped column(s) {missing}")
        index = {name: i for i, name in enumerate(header)}
        start = reader.line_num + 1
        for values in reader:
            lineno, start = start, reader.line_num + 1
            if not any(v.strip() for v in values):
                continue
            if len(values) != len(header):
                yield lineno, None, f"expected {len(header)} columns, got {len(values)}"
                continue
            row = {f: values[index[k]] for f, k in spec.fields.items()}
            mapped = set(spec.fields.values())
            row["_extra"] = {h: values[i] for h, i in index.items() if h not in mapped}
            yield lineno, row, None


def load_corpus(spec: IngestSpec, stats: IngestStats | None = None) -> Iterator[Document]:
    """Stream Documents in file order.

    Bad rows are recorded in ``stats.errors`` and skipped; the stream goes on.
    Missing ids become ``<source>:<line>``.
    """
    stats = stats if stats is not None else IngestStats()
    seen: set[str] = set()
    for lineno, row, error in _raw_rows(spec):
        stats.rows += 1
        if error is None:
            try:
                doc = _to_document(spec, lineno, row)
            except ValueError as exc:
                error = str(exc)
        if error is None and doc.id in seen:
            error = f"id.duplicate: {doc.id!r}"
        if error is not None:
            stats.errors.append(IngestError(lineno, error))
            logger.debug("%s:%d: %s", spec.path, lineno, error)
            continue
        seen.add(doc.id)
        yield doc
    if stats.errors:
        logger.warning("%s: %d malformed row(s) skipped", spec.path, len(stats.errors))


def _to_document(spec: IngestSpec, lineno: int, row: dict[str, Any]) -> Document:
    text = row.get("text")
    if not isinstance(text, str):
        raise ValueError("text.type: text must be a string")
    text = normalize_text(text)
    if not text:
        raise ValueError("text.empty")
    doc_id = row.get("id")
    doc_id = f"{spec.source_name}:{lineno}" if doc_id in (None, "") else str(doc_id)
    variety = (parse_variety(row["variety"], spec.variety_aliases) if "variety" in row
               else spec.default_variety)
    domain = parse_domain(row["domain"]) if "domain" in row else spec.default_domain
    meta = {k: v if isinstance(v, str) else json.dumps(v, ensure_ascii=False, sort_keys=True)
            for k, v in row.get("_extra", {}).items()}
    if "domain" in row and domain is DomainTag.OTHER and str(row["domain"]).strip().lower() != "other":
        meta["domain_raw"] = str(row["domain"])
    if "variety" in row and variety is Variety.UNLABELED:
        meta["variety_raw"] = str(row["variety"])
    return Document(doc_id, text, variety, domain, str(row.get("source") or spec.source_name), meta)


def select_variety(docs: Iterable[Document], accept: Iterable[Variety | str],
                   stats: IngestStats | None = None) -> Iterator[Document]:
    """Pass documents whose variety is in ``accept``, preserving order."""
    accept = {Variety(a) for a in accept}
    stats = stats if stats is not None else IngestStats()
    for doc in docs:
        if doc.variety in accept:
            stats.kept += 1
            yield doc
        else:
            stats.dropped_by_label += 1


def ingest(spec: IngestSpec, stats: IngestStats | None = None) -> Iterator[Document]:
    """``load_corpus`` followed by ``select_variety`` when the spec sets ``accept``."""
    stats = stats if stats is not None else IngestStats()
    docs = load_corpus(spec, stats)
    if spec.accept is None:
        for doc in docs:
            stats.kept += 1
            yield doc
    else:
        yield from select_variety(docs, spec.accept, stats)

"""Core record types, text normalization and JSONL corpus I/O."""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Union

_SPACE_RUN = re.compile(r"[ \t]+")


class Variety(str, enum.Enum):
    TARGET = "target-variety"
    OTHER = "other-variety"
    BOTH = "both"
    UNLABELED = "unlabeled"


class DomainTag(str, enum.Enum):
    JOURNALISTIC = "journalistic"
    LITERATURE = "literature"
    WEB = "web"
    POLITICS = "politics"
    LEGAL = "legal"
    SOCIAL_MEDIA = "social-media"
    NEWS_ANNOTATED = "news-annotated"
    OTHER = "other"


# Source corpora label inconsistently; keys are compared casefolded with
# "_" and extra spaces normalized away.
VARIETY_ALIASES: dict[str, Variety] = {
    "target-variety": Variety.TARGET,
    "european portuguese": Variety.TARGET,
    "portuguese (portugal)": Variety.TARGET,
    "pt-pt": Variety.TARGET,
    "ep": Variety.TARGET,
    "other-variety": Variety.OTHER,
    "brazilian portuguese": Variety.OTHER,
    "portuguese (brazil)": Variety.OTHER,
    "pt-br": Variety.OTHER,
    "bp": Variety.OTHER,
    "both": Variety.BOTH,
    "unlabeled": Variety.UNLABELED,
    "": Variety.UNLABELED,
}

DOMAIN_ALIASES: dict[str, DomainTag] = {
    "journalism": DomainTag.JOURNALISTIC,
    "journalistic": DomainTag.JOURNALISTIC,
    "literature": DomainTag.LITERATURE,
    "web": DomainTag.WEB,
    "politics": DomainTag.POLITICS,
    "legal": DomainTag.LEGAL,
    "law": DomainTag.LEGAL,
    "social-media": DomainTag.SOCIAL_MEDIA,
    "social media": DomainTag.SOCIAL_MEDIA,
    "news-annotated": DomainTag.NEWS_ANNOTATED,
    "news": DomainTag.NEWS_ANNOTATED,
    "dsl-tl": DomainTag.NEWS_ANNOTATED,
    "other": DomainTag.OTHER,
}


def _alias_key(value: str) -> str:
    return " ".join(value.replace("_", "-").casefold().split())


def parse_variety(value: Any, aliases: Mapping[str, Variety] | None = None) -> Variety:
    """Map a free-form variety label onto :class:`Variety`.

    Unrecognized labels become ``UNLABELED`` so the variety selector rejects
    them instead of guessing.
    """
    if isinstance(value, Variety):
        return value
    if value is None:
        return Variety.UNLABELED
    table = dict(VARIETY_ALIASES)
    if aliases:
        table.update({_alias_key(k): Variety(v) for k, v in aliases.items()})
    return table.get(_alias_key(str(value)), Variety.UNLABELED)


def parse_domain(value: Any) -> DomainTag:
    if isinstance(value, DomainTag):
        return value
    if value is None:
        return DomainTag.OTHER
    return DOMAIN_ALIASES.get(_alias_key(str(value)), DomainTag.OTHER)


class Utf8DecodeError(ValueError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"invalid UTF-8 at byte offset {offset}: {reason}")
        self.offset = offset


def decode_utf8(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise Utf8DecodeError(exc.start, exc.reason) from None


def normalize_text(raw: Union[str, bytes]) -> str:
    """NFC-normalize, unify line endings, collapse space/tab runs and trim.

    Newlines are kept because the boilerplate stage segments on blank lines.
    """
    text = decode_utf8(raw) if isinstance(raw, bytes) else raw
    text = unicodedata.normalize("NFC", text)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _SPACE_RUN.sub(" ", text)
    return text.strip()


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    variety: Variety = Variety.UNLABELED
    domain: DomainTag = DomainTag.OTHER
    source: str = ""
    meta: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "variety": self.variety.value,
            "domain": self.domain.value,
            "source": self.source,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Document":
        known = {"id", "text", "variety", "domain", "source", "meta"}
        meta = _extras_into_meta(data, known)
        return cls(
            id=str(data.get("id", "")),
            text=str(data.get("text", "")),
            variety=parse_variety(data.get("variety")),
            domain=parse_domain(data.get("domain")),
            source=str(data.get("source", "")),
            meta=meta,
        )


@dataclass(frozen=True)
class ParallelPair:
    """An aligned record: ``source_text`` is the resource-rich side (English),
    ``target_text`` the low-resource variety it was translated from."""

    id: str
    source_text: str
    target_text: str
    domain: DomainTag = DomainTag.OTHER
    backend_id: str = ""
    created_at: datetime = datetime(1970, 1, 1, tzinfo=timezone.utc)
    meta: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source_text": self.source_text,
            "target_text": self.target_text,
            "domain": self.domain.value,
            "backend_id": self.backend_id,
            "created_at": format_timestamp(self.created_at),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ParallelPair":
        known = {"id", "source_text", "target_text", "domain", "backend_id", "created_at", "meta"}
        meta = _extras_into_meta(data, known)
        created = data.get("created_at")
        return cls(
            id=str(data.get("id", "")),
            source_text=str(data.get("source_text", "")),
            target_text=str(data.get("target_text", "")),
            domain=parse_domain(data.get("domain")),
            backend_id=str(data.get("backend_id", "")),
            created_at=parse_timestamp(created) if created else ParallelPair.created_at,
            meta=meta,
        )


Record = Union[Document, ParallelPair]


def target_text(record: Record) -> str:
    """The low-resource-variety text of a record, which every filter inspects."""
    return record.target_text if isinstance(record, ParallelPair) else record.text


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _extras_into_meta(data: Mapping[str, Any], known: set[str]) -> dict[str, str]:
    meta = {str(k): _meta_value(v) for k, v in (data.get("meta") or {}).items()}
    for key, value in data.items():
        if key not in known:
            meta[key] = _meta_value(value)
    return meta


def _meta_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}.{self.rule}"


def validate_document(doc: Document, seen_ids: set[str] | None = None) -> list[Violation]:
    """Check Document invariants; pass ``seen_ids`` to also check batch uniqueness.

    ``seen_ids`` is updated in place with the document's id.
    """
    violations = []
    if not doc.id:
        violations.append(Violation("id", "empty"))
    elif seen_ids is not None:
        if doc.id in seen_ids:
            violations.append(Violation("id", "duplicate"))
        seen_ids.add(doc.id)
    if not doc.text.strip():
        violations.append(Violation("text", "empty"))
    elif _has_surrogates(doc.text):
        violations.append(Violation("text", "utf8"))
    return violations


def validate_batch(docs: Iterable[Document]) -> dict[str, list[Violation]]:
    seen: set[str] = set()
    report = {}
    for doc in docs:
        found = validate_document(doc, seen)
        if found:
            report.setdefault(doc.id, []).extend(found)
    return report


def _has_surrogates(text: str) -> bool:
    try:
        text.encode("utf-8")
    except UnicodeEncodeError:
        return True
    return False


def record_from_dict(data: Mapping[str, Any]) -> Record:
    if "target_text" in data:
        return ParallelPair.from_dict(data)
    return Document.from_dict(data)


def dumps_record(record: Record | Mapping[str, Any]) -> str:
    payload = record if isinstance(record, Mapping) else record.to_dict()
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None


def read_records(path: str | Path) -> Iterator[Record]:
    for row in read_jsonl(path):
        yield record_from_dict(row)


def write_jsonl(path: str | Path, rows: Iterable[Record | Mapping[str, Any]]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dumps_record(row) + "\n")
            n += 1
    return n

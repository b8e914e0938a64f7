"""Instruction-tuning export of a parallel corpus as system/user/assistant records."""

from __future__ import annotations

import json
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .corpus import ParallelPair
from .errors import ConfigError
from .tokenization import Tokenizer, WhitespaceTokenizer

PLACEHOLDER = "{source}"
DEFAULT_SYSTEM = "You are a translator from English to European Portuguese"
DEFAULT_USER = "Translate this text from English to European Portuguese: " + PLACEHOLDER


@dataclass(frozen=True)
class PromptTemplate:
    system_message: str | None = DEFAULT_SYSTEM
    user_template: str = DEFAULT_USER
    target_field: str = "assistant"

    def __post_init__(self):
        n = self.user_template.count(PLACEHOLDER)
        if n != 1:
            raise ConfigError(f"user_template must contain {PLACEHOLDER} exactly once, found {n}")

    @classmethod
    def from_dict(cls, data: dict) -> "PromptTemplate":
        unknown = set(data) - {"system_message", "user_template", "target_field"}
        if unknown:
            raise ConfigError(f"unknown template key(s): {sorted(unknown)}")
        return cls(**data)


def render_record(pair: ParallelPair, template: PromptTemplate = PromptTemplate()) -> dict[str, str]:
    record = {}
    if template.system_message:
        record["system"] = template.system_message
    record["user"] = template.user_template.replace(PLACEHOLDER, pair.source_text)
    record[template.target_field] = pair.target_text
    return record


def record_tokens(record: dict[str, str], tokenizer: Tokenizer) -> int:
    return sum(tokenizer.count(v) for v in record.values())


@dataclass
class ExportResult:
    written: int
    skipped: list[dict]

    def to_dict(self):
        return {"written": self.written, "skipped": len(self.skipped), "skipped_ids": self.skipped}


def export_corpus(pairs: Iterable[ParallelPair], path: str | Path, template: PromptTemplate = PromptTemplate(),
                  tokenizer: Tokenizer | None = None, max_tokens: int = 1024) -> ExportResult:
    """Write records whose rendered token count is at most ``max_tokens``."""
    tok = tokenizer or WhitespaceTokenizer()
    written = 0
    skipped = []
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            record = render_record(pair, template)
            n = record_tokens(record, tok)
            if n > max_tokens:
                skipped.append({"id": pair.id, "tokens": n})
                continue
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            written += 1
    return ExportResult(written, skipped)

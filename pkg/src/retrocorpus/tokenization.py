"""Token counting: byte-level BPE from a vocab/merges pair, or whitespace runs."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import regex

# GPT-2 style pre-tokenizer.
PRETOKENIZE = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)
_NON_WS = re.compile(r"\S+")


class TokenizerError(Exception):
    pass


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable character table used by byte-level BPE files."""
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


@dataclass(frozen=True)
class TokenizerSpec:
    kind: str = "whitespace"
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("whitespace", "byte-level-bpe"):
            raise TokenizerError(f"unknown tokenizer kind {self.kind!r}")
        if self.kind == "byte-level-bpe" and not self.path:
            raise TokenizerError("byte-level-bpe requires a vocabulary directory")

    @classmethod
    def parse(cls, value: str) -> "TokenizerSpec":
        """Accepts ``whitespace``, ``bpe:<dir>`` or a bare vocabulary directory."""
        if value in ("", "whitespace"):
            return cls()
        if value.startswith("bpe:"):
            return cls("byte-level-bpe", value[4:])
        if Path(value).is_dir():
            return cls("byte-level-bpe", value)
        raise TokenizerError(f"cannot interpret tokenizer spec {value!r}")

    def describe(self) -> str:
        return "whitespace" if self.kind == "whitespace" else f"bpe:{self.path}"


class WhitespaceTokenizer:
    kind = "whitespace"

    def tokenize(self, text: str) -> list[int]:
        # Whitespace runs have no vocabulary; ids are positions.
        return list(range(self.count(text)))

    def count(self, text: str) -> int:
        return len(_NON_WS.findall(text))


class ByteLevelBPE:
    kind = "byte-level-bpe"

    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]]):
        self.vocab = vocab
        self.ranks = {pair: i for i, pair in enumerate(merges)}
        self._byte_map = bytes_to_unicode()
        self._cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_dir(cls, path: str | Path) -> "ByteLevelBPE":
        path = Path(path)
        return cls.from_files(path / "vocab.json", path / "merges.txt")

    @classmethod
    def from_files(cls, vocab_path: str | Path, merges_path: str | Path) -> "ByteLevelBPE":
        try:
            with open(vocab_path, encoding="utf-8") as fh:
                vocab = json.load(fh)
        except OSError as exc:
            raise TokenizerError(f"cannot read vocabulary {vocab_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise TokenizerError(f"{vocab_path}:{exc.lineno}: malformed vocabulary ({exc.msg})") from None
        if not isinstance(vocab, dict):
            raise TokenizerError(f"{vocab_path}: vocabulary must be a token -> id object")
        for token, idx in vocab.items():
            if not isinstance(idx, int) or idx < 0:
                raise TokenizerError(f"{vocab_path}: token {token!r} has invalid id {idx!r}")

        merges = []
        try:
            fh = open(merges_path, encoding="utf-8")
        except OSError as exc:
            raise TokenizerError(f"cannot read merges {merges_path}: {exc}") from None
        with fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or (lineno == 1 and line.startswith("#version")):
                    continue
                parts = line.split(" ")
                if len(parts) != 2 or not all(parts):
                    raise TokenizerError(f"{merges_path}:{lineno}: malformed merge rule {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(vocab, merges)

    def _bpe(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        parts = list(word)
        while len(parts) > 1:
            best = None
            best_rank = None
            for i in range(len(parts) - 1):
                rank = self.ranks.get((parts[i], parts[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best, best_rank = i, rank
            if best is None:
                break
            pair = (parts[best], parts[best + 1])
            merged = []
            i = 0
            while i < len(parts):
                if i < len(parts) - 1 and (parts[i], parts[i + 1]) == pair:
                    merged.append(parts[i] + parts[i + 1])
                    i += 2
                else:
                    merged.append(parts[i])
                    i += 1
            parts = merged
        result = tuple(parts)
        if len(self._cache) < 100_000:
            self._cache[word] = result
        return result

    def pieces(self, text: str) -> list[str]:
        out = []
        for chunk in PRETOKENIZE.findall(text):
            mapped = "".join(self._byte_map[b] for b in chunk.encode("utf-8"))
            out.extend(self._bpe(mapped))
        return out

    def tokenize(self, text: str) -> list[int]:
        ids = []
        for piece in self.pieces(text):
            idx = self.vocab.get(piece)
            if idx is None:
                raise TokenizerError(f"token {piece!r} missing from vocabulary")
            ids.append(idx)
        return ids

    def count(self, text: str) -> int:
        return len(self.tokenize(text))


Tokenizer = WhitespaceTokenizer | ByteLevelBPE


def load_tokenizer(spec: TokenizerSpec | str | None = None) -> Tokenizer:
    if spec is None:
        spec = TokenizerSpec()
    elif isinstance(spec, str):
        spec = TokenizerSpec.parse(spec)
    if spec.kind == "whitespace":
        return WhitespaceTokenizer()
    return ByteLevelBPE.from_dir(spec.path)


def count_tokens(text: str, spec: TokenizerSpec | Tokenizer | str | None = None) -> int:
    tok = spec if isinstance(spec, (WhitespaceTokenizer, ByteLevelBPE)) else load_tokenizer(spec)
    return tok.count(text)


def tokenize(text: str, spec: TokenizerSpec | Tokenizer | str | None = None) -> list[int]:
    tok = spec if isinstance(spec, (WhitespaceTokenizer, ByteLevelBPE)) else load_tokenizer(spec)
    return tok.tokenize(text)

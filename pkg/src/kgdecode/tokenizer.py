"""Vocabulary and the reference greedy longest-match tokenizer.

The automaton and the LM share one vocabulary: a dense id → piece table with
three reserved ids (BOS, EOS, MASK). The reference tokenizer is greedy
longest-piece matching over that table, so it is deterministic, reentrant,
and independently re-implementable as a test oracle. Real LLM tokenizers can
be adapted behind the same `Tokenizer` protocol.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Protocol, Sequence, runtime_checkable

from .errors import EncodingError, VocabularyError

DEFAULT_BOS_PIECE = "<bos>"
DEFAULT_EOS_PIECE = "<eos>"
DEFAULT_MASK_PIECE = "[MASK]"

_WORD_RE = re.compile(r"\w+")


@dataclass(frozen=True)
class Vocabulary:
    """Dense token table: ids 0..size-1, each mapping to a non-empty piece."""

    pieces: tuple[str, ...]
    bos_id: int
    eos_id: int
    mask_id: int

    def __post_init__(self) -> None:
        if not self.pieces:
            raise VocabularyError("vocabulary must contain at least one piece")
        for i, piece in enumerate(self.pieces):
            if not piece:
                raise VocabularyError(f"piece {i} is empty")
        reserved = (self.bos_id, self.eos_id, self.mask_id)
        if len(set(reserved)) != 3:
            raise VocabularyError(f"reserved ids must be distinct, got {reserved}")
        for rid in reserved:
            if not 0 <= rid < len(self.pieces):
                raise VocabularyError(f"reserved id {rid} out of range 0..{len(self.pieces) - 1}")

    @property
    def size(self) -> int:
        return len(self.pieces)

    @cached_property
    def piece_to_id(self) -> dict[str, int]:
        # first occurrence wins when a piece string repeats
        table: dict[str, int] = {}
        for i, piece in enumerate(self.pieces):
            table.setdefault(piece, i)
        return table

    @cached_property
    def max_piece_len(self) -> int:
        return max(len(p) for p in self.pieces)


def encode(vocab: Vocabulary, text: str) -> list[int]:
    """Greedy longest-piece tokenization of `text`.

    Raises EncodingError (naming the byte offset) when no piece matches at
    some position.
    """
    ids: list[int] = []
    table = vocab.piece_to_id
    max_len = vocab.max_piece_len
    pos = 0
    n = len(text)
    while pos < n:
        match_id = -1
        for length in range(min(max_len, n - pos), 0, -1):
            candidate = table.get(text[pos : pos + length])
            if candidate is not None:
                match_id = candidate
                pos += length
                break
        if match_id < 0:
            byte_offset = len(text[:pos].encode("utf-8"))
            raise EncodingError(byte_offset, text[pos : pos + 8])
        ids.append(match_id)
    return ids


def decode(vocab: Vocabulary, ids: Sequence[int], strip_special: bool = False) -> str:
    """Concatenate pieces; with strip_special, BOS/EOS pieces are dropped."""
    out: list[str] = []
    for token_id in ids:
        if not 0 <= token_id < vocab.size:
            raise VocabularyError(f"token id {token_id} out of range 0..{vocab.size - 1}")
        if strip_special and token_id in (vocab.bos_id, vocab.eos_id):
            continue
        out.append(vocab.pieces[token_id])
    return "".join(out)


@runtime_checkable
class Tokenizer(Protocol):
    """Minimal surface the automaton, decoder, and sidecar rely on."""

    @property
    def vocab_size(self) -> int: ...

    @property
    def bos_id(self) -> int: ...

    @property
    def eos_id(self) -> int: ...

    @property
    def mask_id(self) -> int: ...

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class ReferenceTokenizer:
    """Greedy longest-match tokenizer over a fixed Vocabulary."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    @property
    def bos_id(self) -> int:
        return self.vocab.bos_id

    @property
    def eos_id(self) -> int:
        return self.vocab.eos_id

    @property
    def mask_id(self) -> int:
        return self.vocab.mask_id

    def encode(self, text: str) -> list[int]:
        return encode(self.vocab, text)

    def decode(self, ids: Sequence[int], strip_special: bool = False) -> str:
        return decode(self.vocab, ids, strip_special=strip_special)


def build_vocabulary(
    texts: Iterable[str],
    extra_pieces: Iterable[str] = (),
    bos_piece: str = DEFAULT_BOS_PIECE,
    eos_piece: str = DEFAULT_EOS_PIECE,
    mask_piece: str = DEFAULT_MASK_PIECE,
) -> Vocabulary:
    """Derive a vocabulary covering `texts`: reserved pieces, then every
    word (\\w+ run) and every single character, in sorted order.

    Single-character pieces guarantee encode/decode round-trips for any text
    over the covered alphabet; word pieces give the greedy matcher subword
    granularity similar to a trained tokenizer.
    """
    seen: set[str] = set()
    for text in texts:
        seen.update(text)
        seen.update(_WORD_RE.findall(text))
    seen.update(p for p in extra_pieces if p)
    reserved = [bos_piece, eos_piece, mask_piece]
    seen.difference_update(reserved)
    pieces = tuple(reserved + sorted(seen))
    return Vocabulary(pieces=pieces, bos_id=0, eos_id=1, mask_id=2)


def dump_vocabulary(vocab: Vocabulary) -> str:
    """Vocabulary file text: a JSON header line with the reserved ids, then
    one JSON-quoted piece per line (line number = token id)."""
    header = {"version": 1, "bos": vocab.bos_id, "eos": vocab.eos_id, "mask": vocab.mask_id}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(piece, ensure_ascii=False) for piece in vocab.pieces)
    return "".join(line + "\n" for line in lines)


def save_vocabulary(vocab: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_vocabulary(vocab))


def parse_vocabulary(text: str, source: str = "<string>") -> Vocabulary:
    lines = text.splitlines()
    if not lines:
        raise VocabularyError(f"empty vocabulary file: {source}")
    try:
        header = json.loads(lines[0])
        pieces = tuple(json.loads(line) for line in lines[1:] if line)
    except json.JSONDecodeError as exc:
        raise VocabularyError(f"corrupt vocabulary file {source}: {exc}") from exc
    if not isinstance(header, dict) or not all(k in header for k in ("bos", "eos", "mask")):
        raise VocabularyError(f"vocabulary header missing reserved ids: {source}")
    if not all(isinstance(p, str) for p in pieces):
        raise VocabularyError(f"vocabulary pieces must be strings: {source}")
    return Vocabulary(
        pieces=pieces,
        bos_id=int(header["bos"]),
        eos_id=int(header["eos"]),
        mask_id=int(header["mask"]),
    )


def load_vocabulary(path: str) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_vocabulary(fh.read(), source=path)

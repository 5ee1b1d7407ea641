"""Token-level path automaton: the filtering oracle for constrained decoding.

Legal textualized paths are compiled into a trie over token ids. Branching
over distinct next tokens carries the nondeterminism of the path set, while
each (state, token) transition stays a function, so the per-token hot path
is a single dict lookup. A state is accepting exactly when its token prefix
is the full tokenization of some compiled path; EOS is permitted only there.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CompileError, DeadStateError, EncodingError, SnapshotError
from .tokenizer import Tokenizer

ROOT = 0

_SNAPSHOT_MAGIC = b"KGTA"
_SNAPSHOT_VERSION = 1


class TokenAutomaton:
    """Immutable after compile; transitions and masks are read-only and safe
    under unlimited concurrent readers. Per-decode state refs are plain ints
    owned by each hypothesis."""

    def __init__(self, vocab_size: int, eos_id: int):
        if not 0 <= eos_id < vocab_size:
            raise ValueError(f"eos_id {eos_id} out of range for vocab size {vocab_size}")
        self.vocab_size = vocab_size
        self.eos_id = eos_id
        self._children: list[dict[int, int]] = [{}]
        self._accepting: list[bool] = [False]
        self._path_index: list[int | None] = [None]
        self.accepted_paths: list[tuple[tuple[int, ...], str]] = []
        self._mask_cache: dict[int, np.ndarray] = {}
        self._allowed_cache: dict[int, frozenset[int]] = {}

    # -- construction ------------------------------------------------------

    def _insert(self, ids: Sequence[int], text: str) -> None:
        state = ROOT
        for token_id in ids:
            child = self._children[state].get(token_id)
            if child is None:
                child = len(self._children)
                self._children.append({})
                self._accepting.append(False)
                self._path_index.append(None)
                self._children[state][token_id] = child
            state = child
        if not self._accepting[state]:
            self._accepting[state] = True
            self._path_index[state] = len(self.accepted_paths)
            self.accepted_paths.append((tuple(ids), text))

    # -- queries -----------------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self._children)

    def states(self) -> Iterator[int]:
        return iter(range(len(self._children)))

    def is_accepting(self, state: int) -> bool:
        return self._accepting[state]

    def path_index(self, state: int) -> int | None:
        return self._path_index[state]

    def children(self, state: int) -> dict[int, int]:
        return self._children[state]

    def step(self, state: int, token_id: int) -> int:
        """δ: follow the trie edge for token_id, or raise DeadStateError."""
        child = self._children[state].get(token_id)
        if child is None:
            raise DeadStateError(state, token_id)
        return child

    def allowed_tokens(self, state: int) -> frozenset[int]:
        """Tokens with outgoing edges, plus EOS at accepting states."""
        cached = self._allowed_cache.get(state)
        if cached is None:
            allowed = set(self._children[state])
            if self._accepting[state]:
                allowed.add(self.eos_id)
            cached = frozenset(allowed)
            self._allowed_cache[state] = cached
        return cached

    def mask_vector(self, state: int) -> np.ndarray:
        """Dense boolean form of allowed_tokens for the per-token hot path."""
        cached = self._mask_cache.get(state)
        if cached is None:
            mask = np.zeros(self.vocab_size, dtype=bool)
            allowed = self.allowed_tokens(state)
            if allowed:
                mask[list(allowed)] = True
            mask.setflags(write=False)
            cached = mask
            self._mask_cache[state] = cached
        return cached

    def walk(self, ids: Sequence[int]) -> int:
        state = ROOT
        for token_id in ids:
            state = self.step(state, token_id)
        return state

    def accepts(self, ids: Sequence[int]) -> bool:
        state = ROOT
        for token_id in ids:
            child = self._children[state].get(token_id)
            if child is None:
                return False
            state = child
        return self._accepting[state]

    def enumerate_accepted(self) -> list[tuple[int, ...]]:
        """All accepted token sequences, by trie traversal."""
        out: list[tuple[int, ...]] = []
        stack: list[tuple[int, tuple[int, ...]]] = [(ROOT, ())]
        while stack:
            state, prefix = stack.pop()
            if self._accepting[state]:
                out.append(prefix)
            for token_id, child in self._children[state].items():
                stack.append((child, prefix + (token_id,)))
        out.sort()
        return out

    def max_accepted_len(self) -> int:
        return max((len(ids) for ids, _ in self.accepted_paths), default=0)

    # -- snapshot ----------------------------------------------------------

    def save(self, path: str) -> None:
        """Versioned binary snapshot: header, state table, child arrays."""
        with open(path, "wb") as fh:
            fh.write(_SNAPSHOT_MAGIC)
            fh.write(
                struct.pack(
                    "<IIIII",
                    _SNAPSHOT_VERSION,
                    self.vocab_size,
                    self.eos_id,
                    self.num_states,
                    len(self.accepted_paths),
                )
            )
            for state in range(self.num_states):
                children = sorted(self._children[state].items())
                pidx = self._path_index[state]
                fh.write(
                    struct.pack(
                        "<BiI",
                        1 if self._accepting[state] else 0,
                        -1 if pidx is None else pidx,
                        len(children),
                    )
                )
                for token_id, child in children:
                    fh.write(struct.pack("<II", token_id, child))
            for ids, text in self.accepted_paths:
                raw = text.encode("utf-8")
                fh.write(struct.pack("<II", len(ids), len(raw)))
                fh.write(struct.pack(f"<{len(ids)}I", *ids) if ids else b"")
                fh.write(raw)

    @classmethod
    def load(cls, path: str) -> "TokenAutomaton":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _SNAPSHOT_MAGIC:
                raise SnapshotError(f"bad magic {magic!r} in {path}")
            version, vocab_size, eos_id, num_states, num_paths = struct.unpack(
                "<IIIII", fh.read(20)
            )
            if version != _SNAPSHOT_VERSION:
                raise SnapshotError(f"unsupported snapshot version {version}")
            automaton = cls(vocab_size, eos_id)
            automaton._children = []
            automaton._accepting = []
            automaton._path_index = []
            for _ in range(num_states):
                accepting, pidx, n_children = struct.unpack("<BiI", fh.read(9))
                children: dict[int, int] = {}
                for _ in range(n_children):
                    token_id, child = struct.unpack("<II", fh.read(8))
                    children[token_id] = child
                automaton._children.append(children)
                automaton._accepting.append(bool(accepting))
                automaton._path_index.append(None if pidx < 0 else pidx)
            for _ in range(num_paths):
                n_ids, n_raw = struct.unpack("<II", fh.read(8))
                ids = struct.unpack(f"<{n_ids}I", fh.read(4 * n_ids)) if n_ids else ()
                text = fh.read(n_raw).decode("utf-8")
                automaton.accepted_paths.append((tuple(ids), text))
        return automaton


def compile_paths(tokenizer: Tokenizer, path_texts: Iterable[str]) -> TokenAutomaton:
    """Compile textualized paths into a TokenAutomaton.

    The automaton accepts exactly {encode(p) : p in path_texts}; every prefix
    of an accepted sequence exists as a live state. An empty path list yields
    a valid automaton accepting nothing.
    """
    automaton = TokenAutomaton(tokenizer.vocab_size, tokenizer.eos_id)
    seen: set[str] = set()
    for text in path_texts:
        if text in seen:
            continue
        seen.add(text)
        if not text:
            raise CompileError(text, "empty path text")
        try:
            ids = tokenizer.encode(text)
        except EncodingError as exc:
            raise CompileError(text, str(exc)) from exc
        automaton._insert(ids, text)
    return automaton

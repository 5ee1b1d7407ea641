"""Exception types shared across the package."""

from __future__ import annotations


class KgDecodeError(Exception):
    """Base class for all kgdecode errors."""


class TripleParseError(KgDecodeError):
    """A triples stream contained a malformed line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownEntityError(KgDecodeError):
    """A lookup referenced an entity absent from the graph."""

    def __init__(self, label: str):
        super().__init__(f"unknown entity: {label!r}")
        self.label = label


class VocabularyError(KgDecodeError):
    """A vocabulary violated its structural invariants."""


class EncodingError(KgDecodeError):
    """Text could not be tokenized under the active vocabulary."""

    def __init__(self, byte_offset: int, snippet: str):
        super().__init__(f"unencodable text at byte offset {byte_offset}: {snippet!r}")
        self.byte_offset = byte_offset
        self.snippet = snippet


class CompileError(KgDecodeError):
    """A path could not be compiled into the automaton."""

    def __init__(self, path_text: str, reason: str):
        super().__init__(f"cannot compile path {path_text!r}: {reason}")
        self.path_text = path_text


class DeadStateError(KgDecodeError):
    """A transition was requested for a token with no outgoing edge."""

    def __init__(self, state: int, token_id: int):
        super().__init__(f"no transition from state {state} on token {token_id}")
        self.state = state
        self.token_id = token_id


class DeadEndError(KgDecodeError):
    """A state admits no tokens at all; the hypothesis must be pruned."""

    def __init__(self, state: int):
        super().__init__(f"state {state} allows no tokens")
        self.state = state


class EmptyPathSetError(KgDecodeError):
    """No legal reasoning paths exist for a question."""


class EmptyLanguageError(KgDecodeError):
    """Decoding was requested against an automaton that accepts nothing."""


class EmbeddingError(KgDecodeError):
    """An embedding could not be produced for a text."""


class ProviderError(KgDecodeError):
    """An external provider (embedding service, LM runtime) failed."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class TemplateError(KgDecodeError):
    """A prompt template is missing or duplicates a required placeholder."""


class LogitsShapeError(KgDecodeError):
    """Logits vectors disagreed in length or were not one-dimensional."""


class LogitsValueError(KgDecodeError):
    """Logits contained non-finite entries where finite ones are required."""


class DecodeExhaustedError(KgDecodeError):
    """No hypothesis finished within the step budget."""

    def __init__(self, live_prefixes: list[str]):
        super().__init__(
            "no hypothesis finished within max-steps; live prefixes: "
            + "; ".join(repr(p) for p in live_prefixes[:10])
        )
        self.live_prefixes = live_prefixes


class DatasetError(KgDecodeError):
    """A question record violated the dataset contract."""


class SnapshotError(KgDecodeError):
    """An automaton snapshot is corrupt or has an unsupported version."""

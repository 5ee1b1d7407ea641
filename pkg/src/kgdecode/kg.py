"""Triple store: ingest, adjacency indexing, and k-hop path enumeration.

Labels are case-sensitive and compared byte-wise; no Unicode normalization
is applied. The `" → "` sequence (space, U+2192, space) is reserved as the
path delimiter and may not appear inside any label.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Union

from .errors import TripleParseError, UnknownEntityError

PATH_DELIMITER = " → "  # " → "

TripleSource = Union[bytes, BinaryIO, Iterable[str]]


def _validate_label(label: str, role: str) -> str:
    stripped = label.strip()
    if not stripped:
        raise ValueError(f"{role} label is empty")
    if PATH_DELIMITER in stripped:
        raise ValueError(f"{role} label contains the reserved delimiter {PATH_DELIMITER!r}")
    if "\t" in stripped:
        raise ValueError(f"{role} label contains a tab character")
    return stripped


@dataclass(frozen=True)
class Triple:
    """One directed fact: (head, relation, tail)."""

    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "head", _validate_label(self.head, "head"))
        object.__setattr__(self, "relation", _validate_label(self.relation, "relation"))
        object.__setattr__(self, "tail", _validate_label(self.tail, "tail"))


@dataclass(frozen=True)
class Path:
    """A reasoning chain: a start entity plus (relation, entity) hops."""

    start: str
    steps: tuple[tuple[str, str], ...] = ()

    @property
    def hop_count(self) -> int:
        return len(self.steps)

    @property
    def tail(self) -> str:
        """Final entity of the path (the answer position)."""
        return self.steps[-1][1] if self.steps else self.start

    def is_valid_in(self, g: "KnowledgeGraph") -> bool:
        """Every hop corresponds to a triple present in `g`."""
        head = self.start
        for relation, entity in self.steps:
            if Triple(head, relation, entity) not in g.triples:
                return False
            head = entity
        return True


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable triple collection with a deterministic out-edge index.

    Safe to share across concurrent readers once constructed.
    """

    entities: frozenset[str]
    relations: frozenset[str]
    triples: frozenset[Triple]
    out_index: dict[str, tuple[tuple[str, str], ...]] = field(repr=False)

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "KnowledgeGraph":
        unique = frozenset(triples)
        entities = frozenset(t.head for t in unique) | frozenset(t.tail for t in unique)
        relations = frozenset(t.relation for t in unique)
        out: dict[str, list[tuple[str, str]]] = {}
        for t in unique:
            out.setdefault(t.head, []).append((t.relation, t.tail))
        out_index = {head: tuple(sorted(edges)) for head, edges in out.items()}
        return cls(entities=entities, relations=relations, triples=unique, out_index=out_index)

    def out_edges(self, entity: str) -> tuple[tuple[str, str], ...]:
        return self.out_index.get(entity, ())


def _iter_lines(source: TripleSource) -> Iterable[tuple[int, str]]:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if hasattr(source, "read"):
        for line_no, raw in enumerate(source, start=1):
            if isinstance(raw, bytes):
                try:
                    yield line_no, raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    raise TripleParseError(line_no, f"invalid UTF-8: {exc}") from exc
            else:
                yield line_no, raw
    else:
        yield from enumerate(source, start=1)


def ingest_triples(source: TripleSource) -> KnowledgeGraph:
    """Parse a tab-separated triples stream into a KnowledgeGraph.

    One `head<TAB>relation<TAB>tail` record per line; blank lines and
    `#`-prefixed comment lines are ignored; duplicate triples are silently
    deduplicated. Malformed lines raise TripleParseError naming the line.
    """
    triples: list[Triple] = []
    for line_no, line in _iter_lines(source):
        text = line.rstrip("\r\n")
        if not text.strip() or text.lstrip().startswith("#"):
            continue
        fields = text.split("\t")
        if len(fields) != 3:
            raise TripleParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        try:
            triples.append(Triple(*fields))
        except ValueError as exc:
            raise TripleParseError(line_no, str(exc)) from exc
    return KnowledgeGraph.from_triples(triples)


def load_triples_file(path: str) -> KnowledgeGraph:
    with open(path, "rb") as fh:
        return ingest_triples(fh)


def dump_triples(g: KnowledgeGraph) -> str:
    """Canonical TSV rendering: deduplicated triples in sorted order."""
    rows = sorted((t.head, t.relation, t.tail) for t in g.triples)
    return "".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows)


def textualize(p: Path) -> str:
    """Render a path with the `" → "` delimiter; split-inverse of the labels."""
    parts = [p.start]
    for relation, entity in p.steps:
        parts.append(relation)
        parts.append(entity)
    return PATH_DELIMITER.join(parts)


def path_from_text(text: str) -> Path:
    """Inverse of textualize for well-formed path texts."""
    parts = text.split(PATH_DELIMITER)
    if len(parts) % 2 != 1 or not parts[0]:
        raise ValueError(f"not a well-formed path text: {text!r}")
    steps = tuple((parts[i], parts[i + 1]) for i in range(1, len(parts), 2))
    return Path(start=parts[0], steps=steps)


def extract_paths(g: KnowledgeGraph, topic: str, max_hops: int = 2) -> list[Path]:
    """Enumerate all 1..max_hops-hop traversals starting at `topic`.

    Traversals never step back to the immediately preceding entity
    (no A→r→B→r'→A). Results are deterministic: sorted by hop count
    ascending, then lexicographically by textualization.
    """
    if topic not in g.entities:
        raise UnknownEntityError(topic)
    if max_hops < 1:
        raise ValueError(f"max_hops must be >= 1, got {max_hops}")

    found: list[Path] = []
    # (current entity, previous entity or None, accumulated steps)
    frontier: list[tuple[str, str | None, tuple[tuple[str, str], ...]]] = [(topic, None, ())]
    for _ in range(max_hops):
        next_frontier: list[tuple[str, str | None, tuple[tuple[str, str], ...]]] = []
        for entity, prev, steps in frontier:
            for relation, tail in g.out_edges(entity):
                if prev is not None and tail == prev:
                    continue
                extended = steps + ((relation, tail),)
                found.append(Path(start=topic, steps=extended))
                next_frontier.append((tail, entity, extended))
        frontier = next_frontier
    found.sort(key=lambda p: (p.hop_count, textualize(p)))
    return found

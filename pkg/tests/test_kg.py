from __future__ import annotations

import random

import pytest

from kgdecode import (
    KnowledgeGraph,
    Path,
    Triple,
    extract_paths,
    ingest_triples,
    path_from_text,
    textualize,
)
from kgdecode.errors import TripleParseError, UnknownEntityError
from kgdecode.kg import PATH_DELIMITER, dump_triples


def kg_from_rows(rows: list[tuple[str, str, str]]) -> KnowledgeGraph:
    return KnowledgeGraph.from_triples(Triple(*row) for row in rows)


# --- ingest -----------------------------------------------------------------


def test_ingest_empty_stream():
    g = ingest_triples(b"")
    assert len(g.entities) == 0
    assert len(g.triples) == 0


def test_ingest_single_line():
    g = ingest_triples("Akher Saa\tbook.newspaper.circulation_areas\tEgypt\n".encode())
    assert g.entities == {"Akher Saa", "Egypt"}
    assert g.relations == {"book.newspaper.circulation_areas"}
    assert len(g.triples) == 1


def test_ingest_dedup_matches_line_set_oracle():
    lines = [
        "A\tr1\tB",
        "B\tr2\tC",
        "A\tr1\tB",  # duplicate
        "C\tr1\tA",
        "A\tr2\tC",
        "B\tr1\tA",
    ]
    g = ingest_triples("\n".join(lines).encode())
    assert len(g.triples) == len(set(lines)) == 5


def test_ingest_skips_comments_and_blank_lines():
    g = ingest_triples(b"# header comment\n\nA\tr\tB\n   \n# trailing\n")
    assert len(g.triples) == 1


def test_ingest_wrong_field_count_names_line():
    with pytest.raises(TripleParseError) as exc:
        ingest_triples(b"A\tr\tB\nA\tB\n")
    assert exc.value.line_no == 2


def test_ingest_empty_field():
    with pytest.raises(TripleParseError) as exc:
        ingest_triples(b"A\t \tB\n")
    assert exc.value.line_no == 1


def test_ingest_reserved_delimiter_in_field():
    with pytest.raises(TripleParseError):
        ingest_triples(f"A {PATH_DELIMITER} B\tr\tC\n".encode())


def test_ingest_invalid_utf8():
    with pytest.raises(TripleParseError) as exc:
        ingest_triples(b"A\tr\tB\n\xff\xfe\tr\tC\n")
    assert exc.value.line_no == 2


def test_triple_validation_direct():
    with pytest.raises(ValueError):
        Triple("", "r", "B")
    with pytest.raises(ValueError):
        Triple("A", "r\tq", "B")


def test_out_index_sorted_and_complete(currency_kg):
    edges = currency_kg.out_edges("Akher Saa")
    assert edges == tuple(sorted(edges))
    assert {("book.newspaper.circulation_areas", "Egypt"),
            ("book.periodical.language", "Arabic Language")} == set(edges)
    assert currency_kg.out_edges("Egyptian pound") == ()


# --- path extraction ----------------------------------------------------------


def _oracle_paths(g: KnowledgeGraph, topic: str, max_hops: int) -> set[str]:
    """Independent exhaustive recursion over raw triples."""
    found: set[str] = set()

    def rec(entity: str, prev: str | None, steps: tuple[tuple[str, str], ...]):
        if len(steps) == max_hops:
            return
        for t in g.triples:
            if t.head != entity:
                continue
            if prev is not None and t.tail == prev:
                continue
            extended = steps + ((t.relation, t.tail),)
            found.add(textualize(Path(topic, extended)))
            rec(t.tail, entity, extended)

    rec(topic, None, ())
    return found


def test_extract_unknown_topic(currency_kg):
    with pytest.raises(UnknownEntityError) as exc:
        extract_paths(currency_kg, "Nile")
    assert exc.value.label == "Nile"


def test_extract_no_outgoing_edges(currency_kg):
    assert extract_paths(currency_kg, "Egyptian pound") == []


def test_extract_star_graph():
    g = kg_from_rows([("A", "r", "B"), ("A", "r", "C")])
    paths = extract_paths(g, "A", max_hops=2)
    assert [textualize(p) for p in paths] == ["A → r → B", "A → r → C"]


def test_extract_chain():
    g = kg_from_rows([("A", "r1", "B"), ("B", "r2", "C")])
    paths = extract_paths(g, "A", max_hops=2)
    assert [textualize(p) for p in paths] == ["A → r1 → B", "A → r1 → B → r2 → C"]


def test_extract_skips_immediate_backtrack():
    g = kg_from_rows([("A", "r", "B"), ("B", "back", "A")])
    texts = [textualize(p) for p in extract_paths(g, "A", max_hops=2)]
    assert texts == ["A → r → B"]


def test_extract_allows_revisiting_older_entities():
    # A→B→C→A is not an immediate backtrack and stays in.
    g = kg_from_rows([("A", "r1", "B"), ("B", "r2", "C"), ("C", "r3", "A")])
    texts = [textualize(p) for p in extract_paths(g, "A", max_hops=3)]
    assert "A → r1 → B → r2 → C → r3 → A" in texts


def test_extract_matches_exhaustive_oracle():
    rng = random.Random(7)
    entities = [f"E{i}" for i in range(10)]
    relations = ["r1", "r2", "r3"]
    for trial in range(25):
        rows = {
            (rng.choice(entities), rng.choice(relations), rng.choice(entities))
            for _ in range(rng.randint(3, 18))
        }
        g = kg_from_rows(sorted(rows))
        topic = rng.choice(sorted(e for e in g.entities))
        for max_hops in (1, 2, 3):
            got = extract_paths(g, topic, max_hops=max_hops)
            texts = [textualize(p) for p in got]
            assert set(texts) == _oracle_paths(g, topic, max_hops)
            assert len(texts) == len(set(texts)), "duplicate paths"
            assert all(p.is_valid_in(g) for p in got)
            assert texts == sorted(texts, key=lambda t: (t.count(PATH_DELIMITER), t))
            assert got == extract_paths(g, topic, max_hops=max_hops), "unstable output"


# --- textualize ---------------------------------------------------------------


def test_textualize_zero_hop():
    assert textualize(Path("E")) == "E"


def test_textualize_one_hop():
    p = Path("Help Me Make It Thru the Night", (("music.composition.composer", "Joe Walsh"),))
    assert textualize(p) == "Help Me Make It Thru the Night → music.composition.composer → Joe Walsh"


def test_textualize_split_inverse_on_random_paths():
    rng = random.Random(11)
    alphabet = "abcdefgh XYZ.'-_"
    for _ in range(1000):
        labels = [
            "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12))).strip() or "x"
            for _ in range(2 * rng.randint(0, 3) + 1)
        ]
        steps = tuple((labels[i], labels[i + 1]) for i in range(1, len(labels), 2))
        p = Path(labels[0], steps)
        assert textualize(p).split(PATH_DELIMITER) == labels
        assert path_from_text(textualize(p)) == p


def test_textualize_injective_on_fixture_paths(currency_kg):
    paths = extract_paths(currency_kg, "Akher Saa", max_hops=2)
    texts = [textualize(p) for p in paths]
    assert len(set(texts)) == len(paths)


def test_dump_triples_canonical(currency_kg):
    text = dump_triples(currency_kg)
    again = ingest_triples(text.encode())
    assert again.triples == currency_kg.triples
    assert text == dump_triples(again)

from __future__ import annotations

import pytest
from hypothesis import settings

from kgdecode import (
    HashedBagEmbedder,
    KnowledgeGraph,
    QuestionInstance,
    ReferenceTokenizer,
    Triple,
    build_vocabulary,
    extract_paths,
    ingest_triples,
    textualize,
)

settings.register_profile("ci", deadline=None, derandomize=True)
settings.load_profile("ci")

# Fixture graph around a newspaper-circulation question: the high-scoring
# path ends at "Egyptian pound"; the distractor route through the language
# relation ends elsewhere.
CURRENCY_TSV = (
    "Akher Saa\tbook.newspaper.circulation_areas\tEgypt\n"
    "Egypt\tlocation.country.currency_used\tEgyptian pound\n"
    "Akher Saa\tbook.periodical.language\tArabic Language\n"
    "Arabic Language\tlanguage.human_language.main_country\tSaudi Arabia\n"
)

# Fixture graph around a song: composer and guitar plus a type-system branch.
MUSIC_TRIPLES = [
    Triple("Help Me Make It Thru the Night", "music.composition.composer", "Joe Walsh"),
    Triple("Joe Walsh", "music.guitarist.guitars_played", "Fender Stratocaster"),
    Triple("Help Me Make It Thru the Night", "common.topic.notable_types", "Composition"),
    Triple("Composition", "type.type.properties", "Lyricist"),
]


@pytest.fixture(scope="session")
def currency_kg() -> KnowledgeGraph:
    return ingest_triples(CURRENCY_TSV.encode("utf-8"))


@pytest.fixture(scope="session")
def music_kg() -> KnowledgeGraph:
    return KnowledgeGraph.from_triples(MUSIC_TRIPLES)


@pytest.fixture(scope="session")
def music_paths(music_kg):
    return extract_paths(music_kg, "Help Me Make It Thru the Night", max_hops=2)


@pytest.fixture(scope="session")
def music_path_texts(music_paths):
    return [textualize(p) for p in music_paths]


@pytest.fixture(scope="session")
def music_tokenizer(music_path_texts, guitar_question) -> ReferenceTokenizer:
    from kgdecode.prompts import DEFAULT_INSTRUCTION, default_template

    corpus = list(music_path_texts) + [
        default_template(),
        DEFAULT_INSTRUCTION,
        guitar_question.question,
    ]
    vocab = build_vocabulary(corpus, extra_pieces=[" → "])
    return ReferenceTokenizer(vocab)


@pytest.fixture(scope="session")
def embedder() -> HashedBagEmbedder:
    return HashedBagEmbedder()


@pytest.fixture(scope="session")
def guitar_question() -> QuestionInstance:
    return QuestionInstance(
        id="q-guitar",
        question=(
            "Which Fender guitars has Joe Walsh, composer of "
            "Help Me Make It Thru the Night, played?"
        ),
        topic_entities=("Help Me Make It Thru the Night",),
        gold_answers=("Fender Stratocaster",),
    )

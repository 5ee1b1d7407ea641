"""Synthetic KGQA suite generator.

Builds a random knowledge graph with one disjoint neighborhood per question:
a planted 1- or 2-hop gold path plus distractor edges. Question text is
templated to share tokens with the gold path's topic entity and relations
(never with the answer), and gold/distractor relations draw from disjoint
word pools, so the reference bag-of-tokens embedder provably ranks the gold
path top-1. The generator asserts that calibration on every question.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Iterable, Sequence

from .errors import DatasetError
from .kg import KnowledgeGraph, Path, Triple, extract_paths, textualize
from .prompts import DEFAULT_INSTRUCTION, DEFAULT_MASK_FORM, default_template
from .scoring import HashedBagEmbedder, QuestionInstance, score_paths
from .tokenizer import Vocabulary, build_vocabulary

_ADJECTIVES = (
    "amber", "cobalt", "ivory", "crimson", "slate", "violet", "umber", "jade",
    "saffron", "indigo", "coral", "onyx", "pewter", "russet", "teal", "ochre",
)
_NOUNS = (
    "falcon", "harbor", "violin", "meadow", "lantern", "glacier", "orchard",
    "citadel", "compass", "anvil", "beacon", "thicket", "quarry", "steeple",
)

# Relation phrases are uniformly two words, every word unique across both
# pools and absent from the question-template filler, so a gold path always
# beats its own 1-hop prefix and every distractor at the cosine argmax.
_GOLD_RELATIONS = (
    "studied under", "founded lodge", "located upon", "composed suites",
    "flows seaward", "awarded medal", "written scrolls", "discovered reef",
    "succeeded throne", "orbits yearly", "guarded gates", "borders eastward",
)
_DISTRACTOR_RELATIONS = (
    "archived vault", "tagged ledger", "mirrored basin", "shelved annex",
    "painted mural", "catalogued fiche", "fenced paddock", "stored cellar",
    "leased acre", "rumored gossip",
)


@dataclass(frozen=True)
class SynthConfig:
    num_questions: int = 50
    seed: int = 0
    two_hop_fraction: float = 0.6
    min_topic_distractors: int = 2
    max_topic_distractors: int = 4
    max_mid_distractors: int = 2

    def __post_init__(self) -> None:
        if self.num_questions < 1:
            raise ValueError("num_questions must be >= 1")
        if not 0.0 <= self.two_hop_fraction <= 1.0:
            raise ValueError("two_hop_fraction must be in [0, 1]")


@dataclass(frozen=True)
class SynthSuite:
    kg: KnowledgeGraph
    questions: tuple[QuestionInstance, ...]

    def vocabulary(self) -> Vocabulary:
        return suite_vocabulary(self.kg, self.questions)


def _entity_name(rng: random.Random, qidx: int, role: str) -> str:
    return f"{rng.choice(_ADJECTIVES)} {rng.choice(_NOUNS)} {qidx:03d}{role}"


def _question_text(rng: random.Random, topic: str, relations: Sequence[str]) -> str:
    if len(relations) == 1:
        forms = (
            f"Which entity does {topic} reach through {relations[0]}?",
            f"Starting at {topic}, where does {relations[0]} lead?",
        )
    else:
        forms = (
            f"Which entity do you reach when {topic} takes {relations[0]} "
            f"and then {relations[1]}?",
            f"Starting at {topic}, where does {relations[0]} and later "
            f"{relations[1]} arrive?",
        )
    return rng.choice(forms)


def _generate_question(
    config: SynthConfig, qidx: int, embedder: HashedBagEmbedder, max_attempts: int = 32
) -> tuple[list[Triple], QuestionInstance]:
    """Sample one question neighborhood, resampling (deterministically) until
    the gold path wins the embedder argmax; word-hash collisions in the
    256-bucket embedder occasionally disturb a draw."""
    for attempt in range(max_attempts):
        # deterministic per (seed, question, attempt); attempt stays < 64
        rng = random.Random(config.seed * 1_000_003 + qidx * 64 + attempt)
        two_hop = rng.random() < config.two_hop_fraction
        topic = _entity_name(rng, qidx, "t")
        gold_relations = rng.sample(_GOLD_RELATIONS, 2 if two_hop else 1)
        q_triples: list[Triple] = []

        if two_hop:
            mid = _entity_name(rng, qidx, "m")
            answer = _entity_name(rng, qidx, "a")
            q_triples.append(Triple(topic, gold_relations[0], mid))
            q_triples.append(Triple(mid, gold_relations[1], answer))
            gold_path = Path(topic, ((gold_relations[0], mid), (gold_relations[1], answer)))
            # without replacement: a repeated relation would double one
            # line's multiplicity and tie the gold continuation's bonus
            n_mid = rng.randint(0, config.max_mid_distractors)
            for d, rel in enumerate(rng.sample(_DISTRACTOR_RELATIONS, n_mid)):
                q_triples.append(Triple(mid, rel, _entity_name(rng, qidx, f"md{d}")))
        else:
            answer = _entity_name(rng, qidx, "a")
            q_triples.append(Triple(topic, gold_relations[0], answer))
            gold_path = Path(topic, ((gold_relations[0], answer),))

        n_topic_distractors = rng.randint(
            config.min_topic_distractors, config.max_topic_distractors
        )
        distractor_relations = rng.sample(_DISTRACTOR_RELATIONS, n_topic_distractors)
        for d, rel in enumerate(distractor_relations):
            tail = _entity_name(rng, qidx, f"td{d}")
            q_triples.append(Triple(topic, rel, tail))
            # Extended distractors double a first-hop line's multiplicity in
            # the toy LM's prompt bonus; a 1-hop gold path only carries 2, so
            # extensions are planted on 2-hop questions only.
            if two_hop and rng.random() < 0.5:
                rel2 = rng.choice(_DISTRACTOR_RELATIONS)
                q_triples.append(Triple(tail, rel2, _entity_name(rng, qidx, f"tx{d}")))

        question = QuestionInstance(
            id=f"q{qidx:04d}",
            question=_question_text(rng, topic, gold_relations),
            topic_entities=(topic,),
            gold_answers=(answer,),
        )

        # calibration check: neighborhoods are entity-disjoint, so the
        # per-question graph sees exactly the paths the shared graph will
        # expose from this topic.
        mini_kg = KnowledgeGraph.from_triples(q_triples)
        candidates = [(p, textualize(p)) for p in extract_paths(mini_kg, topic, max_hops=2)]
        sps = score_paths(embedder, question, candidates)
        if sps.top1.text == textualize(gold_path):
            return q_triples, question
    raise AssertionError(f"synthetic calibration failed for q{qidx:04d} after {max_attempts} draws")


def generate_suite(config: SynthConfig = SynthConfig()) -> SynthSuite:
    """Generate a deterministic (kg, questions) suite for the given config.

    Question neighborhoods are entity-disjoint, so one shared graph serves
    the whole suite without cross-talk.
    """
    triples: list[Triple] = []
    questions: list[QuestionInstance] = []
    embedder = HashedBagEmbedder()

    for qidx in range(config.num_questions):
        q_triples, question = _generate_question(config, qidx, embedder)
        triples.extend(q_triples)
        questions.append(question)

    return SynthSuite(kg=KnowledgeGraph.from_triples(triples), questions=tuple(questions))


def suite_vocabulary(
    kg: KnowledgeGraph,
    questions: Iterable[QuestionInstance],
    template: str | None = None,
    instruction: str = DEFAULT_INSTRUCTION,
    mask_form: str = DEFAULT_MASK_FORM,
) -> Vocabulary:
    """Vocabulary covering every prompt the suite can produce: all labels,
    question texts, the template, the instruction, and the mask form."""
    texts: list[str] = [template if template is not None else default_template(), instruction]
    for t in sorted(kg.triples, key=lambda t: (t.head, t.relation, t.tail)):
        texts.extend((t.head, t.relation, t.tail))
    for q in questions:
        texts.append(q.question)
        texts.extend(q.topic_entities)
    texts.append(mask_form)
    return build_vocabulary(texts, extra_pieces=[" → ", mask_form])


# --- dataset file IO ---------------------------------------------------------


def load_dataset(path: str) -> list[QuestionInstance]:
    """Read a JSONL dataset: {"id", "question", "topic_entities", "answers"}."""
    questions: list[QuestionInstance] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                questions.append(
                    QuestionInstance(
                        id=str(row["id"]),
                        question=str(row["question"]),
                        topic_entities=tuple(row["topic_entities"]),
                        gold_answers=tuple(row.get("answers", ())),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{line_no}: missing field: {exc}") from exc
    return questions


def dump_dataset(questions: Iterable[QuestionInstance]) -> str:
    rows = []
    for q in questions:
        rows.append(
            json.dumps(
                {
                    "id": q.id,
                    "question": q.question,
                    "topic_entities": list(q.topic_entities),
                    "answers": list(q.gold_answers),
                },
                ensure_ascii=False,
            )
        )
    return "".join(row + "\n" for row in rows)


def write_suite(suite: SynthSuite, out_dir: str) -> dict[str, str]:
    """Write triples.tsv, dataset.jsonl, and vocab.txt; returns the paths."""
    from .kg import dump_triples
    from .tokenizer import save_vocabulary

    directory = FsPath(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "triples": str(directory / "triples.tsv"),
        "dataset": str(directory / "dataset.jsonl"),
        "vocab": str(directory / "vocab.txt"),
    }
    (directory / "triples.tsv").write_text(dump_triples(suite.kg), encoding="utf-8")
    (directory / "dataset.jsonl").write_text(dump_dataset(suite.questions), encoding="utf-8")
    save_vocabulary(suite.vocabulary(), paths["vocab"])
    return paths

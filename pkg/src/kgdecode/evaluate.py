"""End-to-end evaluation: Hit@1, F1, drift classification, and sweeps.

Runs the full pipeline (extract → score → prompt → decode) per question,
with ablation switches for the strengthening and filtering stages, and
classifies each question's outcome: kg-inconsistent when any ranked path
escapes the automaton (only reachable with filtering disabled),
question-inconsistent when the paths are legal but the top answer misses,
none otherwise.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .automaton import compile_paths
from .decode import AdversarialLm, DecodeConfig, LmProvider, ToyLm, beam_decode
from .errors import DatasetError, KgDecodeError
from .kg import PATH_DELIMITER, KnowledgeGraph, extract_paths, textualize
from .logits import PipelineConfig
from .prompts import DEFAULT_INSTRUCTION, DEFAULT_MASK_FORM, build_prompts, default_template
from .scoring import HashedBagEmbedder, QuestionInstance, ThresholdPolicy, score_paths
from .synth import suite_vocabulary
from .tokenizer import ReferenceTokenizer

OMEGA_SWEEP = (-1.0, 0.0, 1.0, 2.0, 3.0, 5.0, 10.0)
BEAM_SWEEP = (1, 2, 5, 10, 20)

DRIFT_NONE = "none"
DRIFT_KG = "kg-inconsistent"
DRIFT_QUESTION = "question-inconsistent"


def _normalize(label: str, casefold: bool) -> str:
    label = label.strip()
    return label.casefold() if casefold else label


def hit_at_1(predicted_top1: str, gold: set[str], casefold: bool = True) -> int:
    """1 iff the top-ranked answer is in the gold set (match after trimming;
    case-folded by default, byte-exact with casefold=False)."""
    if not gold:
        raise DatasetError("gold answer set is empty")
    golds = {_normalize(g, casefold) for g in gold}
    return 1 if _normalize(predicted_top1, casefold) in golds else 0


def f1(
    predicted: set[str], gold: set[str], casefold: bool = True
) -> tuple[float, float, float]:
    """(precision, recall, f1) over predicted vs gold answer sets."""
    if not gold:
        raise DatasetError("gold answer set is empty")
    p_set = {_normalize(p, casefold) for p in predicted}
    g_set = {_normalize(g, casefold) for g in gold}
    overlap = len(p_set & g_set)
    precision = overlap / len(p_set) if p_set else 0.0
    recall = overlap / len(g_set)
    if precision + recall == 0.0:
        return (precision, recall, 0.0)
    return (precision, recall, 2.0 * precision * recall / (precision + recall))


@dataclass(frozen=True)
class EvalConfig:
    beam_size: int = 20
    omega: float = 2.0
    space: str = "logit"
    strengthen: bool = True
    filter: bool = True
    max_hops: int = 2
    mask_form: str = DEFAULT_MASK_FORM
    lm: str = "toy"  # "toy" | "adversarial"
    seed: int = 0
    lm_bonus: float = 8.0
    lm_noise: float = 0.5
    branch_sensitivity: float = 0.0
    casefold: bool = True
    predicted_set: str = "all"  # "all" | "top1"
    jobs: int = 1
    template: str | None = None
    instruction: str | None = None
    plus_policy_mode: str = "top1"
    plus_policy_k: int = 1


@dataclass(frozen=True)
class QuestionResult:
    id: str
    ranked_answers: tuple[str, ...]
    hit1: int
    precision: float
    recall: float
    f1: float
    drift_class: str
    prompt_tokens: int = 0
    generated_tokens: int = 0
    error: str | None = None


@dataclass(frozen=True)
class EvalReport:
    per_question: tuple[QuestionResult, ...]
    aggregate: dict
    config_echo: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "aggregate": self.aggregate,
                "config": self.config_echo,
                "per_question": [asdict(q) for q in self.per_question],
            },
            sort_keys=True,
            indent=2,
        )


def _planted_illegal_text(kg: KnowledgeGraph, q: QuestionInstance) -> str:
    """A path text absent from the graph but encodable under its vocabulary:
    first hop's relation looped back onto the topic entity."""
    topic = q.topic_entities[0]
    for relation, tail in kg.out_edges(topic):
        if tail != topic:
            return PATH_DELIMITER.join((topic, relation, topic))
    return PATH_DELIMITER.join((topic, "mirrors", topic))


class _RunContext:
    """Shared per-run state: one vocabulary, one template, one LM."""

    def __init__(self, dataset: Sequence[QuestionInstance], kg: KnowledgeGraph,
                 config: EvalConfig):
        self.kg = kg
        self.config = config
        self.template = config.template if config.template is not None else default_template()
        self.instruction = (
            config.instruction if config.instruction is not None else DEFAULT_INSTRUCTION
        )
        vocab = suite_vocabulary(kg, dataset, self.template, self.instruction, config.mask_form)
        self.tokenizer = ReferenceTokenizer(vocab)
        self.embedder = HashedBagEmbedder()
        self.policy = ThresholdPolicy(mode=config.plus_policy_mode, k=config.plus_policy_k)
        self.decode_cfg = DecodeConfig(
            beam_size=config.beam_size,
            strengthen=config.strengthen,
            filter=config.filter,
        )
        self.pipeline_cfg = PipelineConfig(omega=config.omega, space=config.space)
        self._shared_toy = ToyLm(
            self.tokenizer,
            seed=config.seed,
            bonus=config.lm_bonus,
            noise_scale=config.lm_noise,
            branch_sensitivity=config.branch_sensitivity,
        )

    def lm_for(self, q: QuestionInstance) -> LmProvider:
        if self.config.lm == "toy":
            return self._shared_toy
        if self.config.lm == "adversarial":
            return AdversarialLm(
                self.tokenizer,
                _planted_illegal_text(self.kg, q),
                seed=self.config.seed,
            )
        raise ValueError(f"unknown lm kind {self.config.lm!r}")

    def decode_one(self, q: QuestionInstance, trace: list | None = None):
        """Full pipeline for one question; raises KgDecodeError subtypes."""
        paths = []
        seen_texts: set[str] = set()
        for topic in q.topic_entities:
            for p in extract_paths(self.kg, topic, max_hops=self.config.max_hops):
                text = textualize(p)
                if text not in seen_texts:
                    seen_texts.add(text)
                    paths.append((p, text))
        sps = score_paths(self.embedder, q, paths, self.policy)
        prompts = build_prompts(self.template, q, sps, self.config.mask_form, self.instruction)
        automaton = compile_paths(self.tokenizer, [e.text for e in sps.entries])
        result = beam_decode(
            self.lm_for(q), prompts, automaton, self.tokenizer,
            self.decode_cfg, self.pipeline_cfg, trace=trace,
        )
        return result, prompts


@dataclass(frozen=True)
class DecodeOutcome:
    """One question's decode (no metrics): what cmd_decode emits."""

    id: str
    answer: str | None
    answers: tuple[str, ...]
    ranked: tuple
    error: str | None = None
    trace: tuple = ()


def run_decode(
    dataset: Sequence[QuestionInstance],
    kg: KnowledgeGraph,
    config: EvalConfig = EvalConfig(),
    collect_traces: bool = False,
) -> list[DecodeOutcome]:
    """Decode every question, recording per-question errors instead of
    raising; gold answers are not consulted."""
    context = _RunContext(dataset, kg, config)

    def decode_question(q: QuestionInstance) -> DecodeOutcome:
        trace: list | None = [] if collect_traces else None
        try:
            result, _ = context.decode_one(q, trace=trace)
        except KgDecodeError as exc:
            return DecodeOutcome(id=q.id, answer=None, answers=(), ranked=(), error=str(exc))
        return DecodeOutcome(
            id=q.id,
            answer=result.answer,
            answers=result.answers(top_only=config.predicted_set == "top1"),
            ranked=result.ranked,
            trace=tuple(trace) if trace else (),
        )

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(decode_question, dataset))
    return [decode_question(q) for q in dataset]


def run_eval(
    dataset: Sequence[QuestionInstance],
    kg: KnowledgeGraph,
    config: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Evaluate the full pipeline over a dataset; deterministic given the
    config. Per-question failures are recorded, never raised."""
    context = _RunContext(dataset, kg, config)
    tokenizer = context.tokenizer

    def evaluate_question(q: QuestionInstance) -> QuestionResult:
        try:
            result, prompts = context.decode_one(q)
            predicted = result.answers(top_only=config.predicted_set == "top1")
            hit = hit_at_1(result.answer, set(q.gold_answers), config.casefold)
            precision, recall, f1_score = f1(
                set(predicted), set(q.gold_answers), config.casefold
            )
            if any(not entry.accepted for entry in result.ranked):
                drift = DRIFT_KG
            elif hit == 0:
                drift = DRIFT_QUESTION
            else:
                drift = DRIFT_NONE
            return QuestionResult(
                id=q.id,
                ranked_answers=predicted,
                hit1=hit,
                precision=precision,
                recall=recall,
                f1=f1_score,
                drift_class=drift,
                prompt_tokens=len(tokenizer.encode(prompts.original))
                + len(tokenizer.encode(prompts.masked)),
                generated_tokens=sum(len(e.token_ids) + 1 for e in result.ranked),
            )
        except KgDecodeError as exc:
            return QuestionResult(
                id=q.id,
                ranked_answers=(),
                hit1=0,
                precision=0.0,
                recall=0.0,
                f1=0.0,
                drift_class=DRIFT_NONE,
                error=str(exc),
            )

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = tuple(pool.map(evaluate_question, dataset))
    else:
        results = tuple(evaluate_question(q) for q in dataset)

    n = len(results)
    aggregate = {
        "num_questions": n,
        "hit1_mean": sum(r.hit1 for r in results) / n if n else 0.0,
        "f1_mean": sum(r.f1 for r in results) / n if n else 0.0,
        "precision_mean": sum(r.precision for r in results) / n if n else 0.0,
        "recall_mean": sum(r.recall for r in results) / n if n else 0.0,
        "errors": sum(1 for r in results if r.error is not None),
        "drift_counts": {
            DRIFT_NONE: sum(1 for r in results if r.drift_class == DRIFT_NONE),
            DRIFT_KG: sum(1 for r in results if r.drift_class == DRIFT_KG),
            DRIFT_QUESTION: sum(1 for r in results if r.drift_class == DRIFT_QUESTION),
        },
    }
    return EvalReport(
        per_question=results, aggregate=aggregate, config_echo=asdict(config)
    )


# --- sweeps -----------------------------------------------------------------


def omega_sweep(
    dataset: Sequence[QuestionInstance],
    kg: KnowledgeGraph,
    config: EvalConfig = EvalConfig(),
    omegas: Iterable[float] = OMEGA_SWEEP,
) -> list[dict]:
    rows = []
    for omega in omegas:
        report = run_eval(dataset, kg, _replace(config, omega=omega))
        rows.append(
            {
                "omega": omega,
                "hit1": report.aggregate["hit1_mean"],
                "f1": report.aggregate["f1_mean"],
            }
        )
    return rows


def beam_sweep(
    dataset: Sequence[QuestionInstance],
    kg: KnowledgeGraph,
    config: EvalConfig = EvalConfig(),
    beams: Iterable[int] = BEAM_SWEEP,
) -> list[dict]:
    rows = []
    for beam in beams:
        report = run_eval(dataset, kg, _replace(config, beam_size=beam))
        rows.append(
            {
                "beam": beam,
                "hit1": report.aggregate["hit1_mean"],
                "f1": report.aggregate["f1_mean"],
            }
        )
    return rows


def _replace(config: EvalConfig, **kwargs) -> EvalConfig:
    import dataclasses

    return dataclasses.replace(config, **kwargs)


def curve_csv(rows: Sequence[dict], x_name: str) -> str:
    """Render sweep rows ({x_name, hit1, f1}) as CSV text."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([x_name, "hit1", "f1"])
    for row in rows:
        writer.writerow([row[x_name], row["hit1"], row["f1"]])
    return buffer.getvalue()

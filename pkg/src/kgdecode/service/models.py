"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class IngestRequest(BaseModel):
    triples_text: str


class IngestResponse(BaseModel):
    num_entities: int
    num_relations: int
    num_triples: int
    normalized_tsv: str


class QuestionPayload(BaseModel):
    id: str
    question: str
    topic_entities: list[str]
    answers: list[str] = Field(default_factory=list)


class DecodeOptions(BaseModel):
    omega: float = 2.0
    beam: int = 20
    space: Literal["logit", "probability"] = "logit"
    strengthen: bool = True
    filter: bool = True
    mask_form: str = "[MASK]"
    max_hops: int = 2
    lm: Literal["toy", "adversarial"] = "toy"
    seed: int = 0
    template: Optional[str] = None
    predicted_set: Literal["all", "top1"] = "all"
    casefold: bool = True
    jobs: int = 1
    trace: bool = False


class DecodeRequest(BaseModel):
    triples_text: str
    questions: list[QuestionPayload]
    options: DecodeOptions = Field(default_factory=DecodeOptions)


class RankedPathModel(BaseModel):
    text: str
    log_score: float
    token_ids: list[int]
    accepted: bool


class DecodeOutcomeModel(BaseModel):
    id: str
    answer: Optional[str] = None
    answers: list[str] = Field(default_factory=list)
    ranked: list[RankedPathModel] = Field(default_factory=list)
    error: Optional[str] = None
    trace: list[dict] = Field(default_factory=list)


class DecodeResponse(BaseModel):
    results: list[DecodeOutcomeModel]


class EvalOptions(DecodeOptions):
    sweep_omega: bool = False
    sweep_beam: bool = False


class EvalRequest(BaseModel):
    triples_text: str
    questions: list[QuestionPayload]
    options: EvalOptions = Field(default_factory=EvalOptions)


class EvalResponse(BaseModel):
    report: dict
    omega_curve: Optional[list[dict]] = None
    beam_curve: Optional[list[dict]] = None


class SynthRequest(BaseModel):
    num_questions: int = 50
    seed: int = 0
    two_hop_fraction: float = 0.6


class SynthResponse(BaseModel):
    triples_tsv: str
    dataset_jsonl: str
    vocab_text: str
    num_entities: int
    num_triples: int


class SessionInitRequest(BaseModel):
    session_id: str
    question: str
    topic_entities: list[str]
    omega: float = 2.0
    space: Literal["logit", "probability"] = "logit"
    paths: Optional[list[str]] = None
    kg_ref: Optional[str] = None
    max_hops: Optional[int] = None


class SessionInitResponse(BaseModel):
    session_id: str
    vocab_size: int
    num_paths: int
    top1_path: str


class SessionStepRequest(BaseModel):
    logits_main: list[float]
    logits_mask: list[float]


class SessionStepResponse(BaseModel):
    logits: list[Optional[float]]
    allowed_count: int
    accepting: bool


class SessionAdvanceRequest(BaseModel):
    token_id: int


class SessionAdvanceResponse(BaseModel):
    accepting: bool
    finished: bool


class OkResponse(BaseModel):
    ok: bool = True


class HealthResponse(BaseModel):
    status: str
    version: str
    vocab_size: Optional[int] = None
    open_sessions: Optional[int] = None

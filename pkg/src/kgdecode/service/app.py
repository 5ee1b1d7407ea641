"""FastAPI service wrapping the decoding engine.

Batch endpoints (/ingest, /decode, /eval, /synth) are stateless: each request
carries its graph and questions. Session endpoints mirror the sidecar
protocol over HTTP for runtimes that prefer it; they require the service to
be started with a vocabulary.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import TripleParseError
from ..evaluate import EvalConfig, beam_sweep, omega_sweep, run_decode, run_eval
from ..kg import dump_triples, ingest_triples
from ..scoring import QuestionInstance
from ..sidecar import SidecarEngine, SidecarError
from ..synth import SynthConfig, dump_dataset, generate_suite
from ..tokenizer import ReferenceTokenizer, Vocabulary, dump_vocabulary
from .models import (
    DecodeOptions,
    DecodeOutcomeModel,
    DecodeRequest,
    DecodeResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    IngestRequest,
    IngestResponse,
    OkResponse,
    QuestionPayload,
    RankedPathModel,
    SessionAdvanceRequest,
    SessionAdvanceResponse,
    SessionInitRequest,
    SessionInitResponse,
    SessionStepRequest,
    SessionStepResponse,
    SynthRequest,
    SynthResponse,
)

_SIDECAR_HTTP_STATUS = {
    "session-exists": 409,
    "dead-session": 404,
    "unknown-session": 404,
    "unknown-kg": 404,
    "unknown-topic": 404,
    "session-finished": 409,
}


def _eval_config(options: DecodeOptions, **extra) -> EvalConfig:
    return EvalConfig(
        beam_size=options.beam,
        omega=options.omega,
        space=options.space,
        strengthen=options.strengthen,
        filter=options.filter,
        max_hops=options.max_hops,
        mask_form=options.mask_form,
        lm=options.lm,
        seed=options.seed,
        casefold=options.casefold,
        predicted_set=options.predicted_set,
        jobs=options.jobs,
        template=options.template,
        **extra,
    )


def _parse_graph(triples_text: str):
    try:
        return ingest_triples(triples_text.encode("utf-8"))
    except TripleParseError as exc:
        raise HTTPException(
            status_code=400,
            detail={"code": "parse-error", "line": exc.line_no, "message": str(exc)},
        ) from exc


def _instances(questions: list[QuestionPayload]) -> list[QuestionInstance]:
    try:
        return [
            QuestionInstance(
                id=q.id,
                question=q.question,
                topic_entities=tuple(q.topic_entities),
                gold_answers=tuple(q.answers),
            )
            for q in questions
        ]
    except Exception as exc:
        raise HTTPException(
            status_code=400, detail={"code": "bad-dataset", "message": str(exc)}
        ) from exc


def create_app(
    vocabulary: Vocabulary | None = None,
    kg_registry: dict[str, str] | None = None,
) -> FastAPI:
    app = FastAPI(title="kgdecode", version=__version__)
    engine = (
        SidecarEngine(ReferenceTokenizer(vocabulary), kg_registry=kg_registry)
        if vocabulary is not None
        else None
    )

    def require_engine() -> SidecarEngine:
        if engine is None:
            raise HTTPException(
                status_code=409,
                detail={
                    "code": "no-vocabulary",
                    "message": "session endpoints need the service started with --vocab",
                },
            )
        return engine

    def sidecar_call(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SidecarError as exc:
            raise HTTPException(
                status_code=_SIDECAR_HTTP_STATUS.get(exc.code, 400),
                detail={"code": exc.code, "message": str(exc)},
            ) from exc

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(
            status="ok",
            version=__version__,
            vocab_size=vocabulary.size if vocabulary is not None else None,
            open_sessions=engine.open_sessions if engine is not None else None,
        )

    @app.post("/ingest", response_model=IngestResponse)
    def ingest(request: IngestRequest) -> IngestResponse:
        kg = _parse_graph(request.triples_text)
        return IngestResponse(
            num_entities=len(kg.entities),
            num_relations=len(kg.relations),
            num_triples=len(kg.triples),
            normalized_tsv=dump_triples(kg),
        )

    @app.post("/decode", response_model=DecodeResponse)
    def decode(request: DecodeRequest) -> DecodeResponse:
        kg = _parse_graph(request.triples_text)
        dataset = _instances(request.questions)
        outcomes = run_decode(
            dataset, kg, _eval_config(request.options),
            collect_traces=request.options.trace,
        )
        return DecodeResponse(
            results=[
                DecodeOutcomeModel(
                    id=o.id,
                    answer=o.answer,
                    answers=list(o.answers),
                    ranked=[
                        RankedPathModel(
                            text=r.text,
                            log_score=r.log_score,
                            token_ids=list(r.token_ids),
                            accepted=r.accepted,
                        )
                        for r in o.ranked
                    ],
                    error=o.error,
                    trace=list(o.trace),
                )
                for o in outcomes
            ]
        )

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(request: EvalRequest) -> EvalResponse:
        kg = _parse_graph(request.triples_text)
        dataset = _instances(request.questions)
        config = _eval_config(request.options)
        report = run_eval(dataset, kg, config)
        response = EvalResponse(
            report={
                "aggregate": report.aggregate,
                "config": report.config_echo,
                "per_question": [dataclasses.asdict(q) for q in report.per_question],
            }
        )
        if request.options.sweep_omega:
            response.omega_curve = omega_sweep(dataset, kg, config)
        if request.options.sweep_beam:
            response.beam_curve = beam_sweep(dataset, kg, config)
        return response

    @app.post("/synth", response_model=SynthResponse)
    def synth(request: SynthRequest) -> SynthResponse:
        try:
            suite = generate_suite(
                SynthConfig(
                    num_questions=request.num_questions,
                    seed=request.seed,
                    two_hop_fraction=request.two_hop_fraction,
                )
            )
        except ValueError as exc:
            raise HTTPException(
                status_code=400, detail={"code": "bad-config", "message": str(exc)}
            ) from exc
        return SynthResponse(
            triples_tsv=dump_triples(suite.kg),
            dataset_jsonl=dump_dataset(suite.questions),
            vocab_text=dump_vocabulary(suite.vocabulary()),
            num_entities=len(suite.kg.entities),
            num_triples=len(suite.kg.triples),
        )

    @app.post("/sessions/init", response_model=SessionInitResponse)
    def session_init(request: SessionInitRequest) -> SessionInitResponse:
        active = require_engine()
        session = sidecar_call(
            active.init_session,
            session_id=request.session_id,
            question=request.question,
            topic_entities=request.topic_entities,
            omega=request.omega,
            space=request.space,
            paths=request.paths,
            kg_ref=request.kg_ref,
            max_hops=request.max_hops,
        )
        return SessionInitResponse(
            session_id=session.session_id,
            vocab_size=active.tokenizer.vocab_size,
            num_paths=session.num_paths,
            top1_path=session.top1_path,
        )

    @app.post("/sessions/{session_id}/step", response_model=SessionStepResponse)
    def session_step(session_id: str, request: SessionStepRequest) -> SessionStepResponse:
        active = require_engine()
        body = sidecar_call(
            active.step_session, session_id, request.logits_main, request.logits_mask
        )
        return SessionStepResponse(**body)

    @app.post("/sessions/{session_id}/advance", response_model=SessionAdvanceResponse)
    def session_advance(
        session_id: str, request: SessionAdvanceRequest
    ) -> SessionAdvanceResponse:
        active = require_engine()
        body = sidecar_call(active.advance_session, session_id, request.token_id)
        return SessionAdvanceResponse(**body)

    @app.delete("/sessions/{session_id}", response_model=OkResponse)
    def session_close(session_id: str) -> OkResponse:
        active = require_engine()
        sidecar_call(active.close_session, session_id)
        return OkResponse()

    return app

"""Sidecar protocol: per-token logits transformation for external runtimes.

An external inference runtime opens a session (compiling paths into an
automaton and learning which path to mask), then per generated token sends
both branches' raw logits and receives the strengthened-filtered vector
(disallowed entries as JSON null); sampling stays client-side, and the
client reports the sampled token back to advance the automaton walk.

Frames are newline-delimited JSON, one request per frame, served over TCP
or stdio. Responses echo the request's `seq` and carry the session id.
Malformed frames produce structured error frames and never kill the
connection. Frame schemas are documented in docs/protocol.md; the recorded
transcript under tests/data/ is the conformance artifact.
"""

from __future__ import annotations

import asyncio
import json
import sys
import threading
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable

import numpy as np

from .automaton import ROOT, TokenAutomaton, compile_paths
from .errors import (
    CompileError,
    EmptyPathSetError,
    KgDecodeError,
    UnknownEntityError,
)
from .kg import KnowledgeGraph, extract_paths, load_triples_file, textualize
from .logits import PipelineConfig, filter_logits, strengthen
from .scoring import EmbeddingProvider, HashedBagEmbedder, QuestionInstance, score_paths
from .tokenizer import Tokenizer

PROTOCOL_VERSION = 1

OPS = ("init", "step", "advance", "close")


class SidecarError(KgDecodeError):
    """Structured protocol error; `code` travels on the wire."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class Session:
    session_id: str
    automaton: TokenAutomaton
    pipeline: PipelineConfig
    top1_path: str
    num_paths: int
    state: int = ROOT
    finished: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class SidecarEngine:
    """Session table plus the four protocol operations.

    Thread-safe: the table is guarded, and per-session operations serialize
    on the session's lock while staying independent across sessions.
    """

    def __init__(
        self,
        tokenizer: Tokenizer,
        embedder: EmbeddingProvider | None = None,
        kg_registry: dict[str, str] | None = None,
        allow_path_kg_refs: bool = True,
        max_hops: int = 2,
    ):
        self.tokenizer = tokenizer
        self.embedder = embedder if embedder is not None else HashedBagEmbedder()
        self.kg_registry = dict(kg_registry or {})
        self.allow_path_kg_refs = allow_path_kg_refs
        self.max_hops = max_hops
        self._sessions: dict[str, Session] = {}
        self._table_lock = threading.Lock()
        self._kg_cache: dict[str, KnowledgeGraph] = {}

    # -- kg resolution -------------------------------------------------------

    def _resolve_kg(self, kg_ref: str) -> KnowledgeGraph:
        cached = self._kg_cache.get(kg_ref)
        if cached is not None:
            return cached
        path = self.kg_registry.get(kg_ref)
        if path is None:
            if not self.allow_path_kg_refs:
                raise SidecarError("unknown-kg", f"kg_ref {kg_ref!r} is not registered")
            path = kg_ref
        try:
            kg = load_triples_file(path)
        except OSError as exc:
            raise SidecarError("unknown-kg", f"cannot load kg_ref {kg_ref!r}: {exc}") from exc
        self._kg_cache[kg_ref] = kg
        return kg

    # -- typed operations ------------------------------------------------------

    def init_session(
        self,
        session_id: str,
        question: str,
        topic_entities: Iterable[str],
        omega: float = 2.0,
        space: str = "logit",
        paths: Iterable[str] | None = None,
        kg_ref: str | None = None,
        max_hops: int | None = None,
    ) -> Session:
        if not session_id or not isinstance(session_id, str):
            raise SidecarError("bad-request", "session_id must be a non-empty string")
        if (paths is None) == (kg_ref is None):
            raise SidecarError("bad-request", "exactly one of paths/kg_ref is required")
        try:
            instance = QuestionInstance(
                id=session_id, question=question, topic_entities=tuple(topic_entities)
            )
        except KgDecodeError as exc:
            raise SidecarError("bad-request", str(exc)) from exc

        if kg_ref is not None:
            kg = self._resolve_kg(kg_ref)
            path_texts: list[str] = []
            seen: set[str] = set()
            try:
                for topic in instance.topic_entities:
                    for p in extract_paths(kg, topic, max_hops=max_hops or self.max_hops):
                        text = textualize(p)
                        if text not in seen:
                            seen.add(text)
                            path_texts.append(text)
            except UnknownEntityError as exc:
                raise SidecarError("unknown-topic", str(exc)) from exc
        else:
            path_texts = [str(p) for p in paths or ()]

        if not path_texts:
            raise SidecarError("empty-paths", "no legal reasoning paths for this session")

        try:
            sps = score_paths(self.embedder, instance, [(None, t) for t in path_texts])
            automaton = compile_paths(self.tokenizer, [e.text for e in sps.entries])
            pipeline = PipelineConfig(omega=float(omega), space=space)
        except (CompileError, EmptyPathSetError, ValueError) as exc:
            raise SidecarError("bad-request", str(exc)) from exc

        session = Session(
            session_id=session_id,
            automaton=automaton,
            pipeline=pipeline,
            top1_path=sps.top1.text,
            num_paths=len(sps.entries),
        )
        with self._table_lock:
            if session_id in self._sessions:
                raise SidecarError("session-exists", f"session {session_id!r} already open")
            self._sessions[session_id] = session
        return session

    def _live_session(self, session_id) -> Session:
        if not isinstance(session_id, str):
            raise SidecarError("bad-request", "session_id must be a string")
        with self._table_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SidecarError("dead-session", f"session {session_id!r} is not open")
        return session

    def step_session(self, session_id: str, logits_main, logits_mask) -> dict:
        session = self._live_session(session_id)
        with session.lock:
            if session.finished:
                raise SidecarError("session-finished", "session finished; only close is allowed")
            vocab_size = self.tokenizer.vocab_size
            for name, values in (("logits_main", logits_main), ("logits_mask", logits_mask)):
                if not isinstance(values, (list, tuple)) or len(values) != vocab_size:
                    raise SidecarError(
                        "length-mismatch",
                        f"{name} must be a list of {vocab_size} numbers",
                    )
            try:
                main = np.asarray(logits_main, dtype=np.float64)
                mask = np.asarray(logits_mask, dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise SidecarError("bad-logits", f"logits are not numeric: {exc}") from exc
            try:
                z = strengthen(main, mask, session.pipeline)
                filtered = filter_logits(z, session.automaton, session.state)
            except KgDecodeError as exc:
                raise SidecarError("bad-logits", str(exc)) from exc
            allowed = session.automaton.mask_vector(session.state)
            if not np.all(np.isfinite(filtered[allowed])):
                raise SidecarError("bad-logits", "combination overflowed to non-finite values")
            out = [float(filtered[i]) if allowed[i] else None for i in range(vocab_size)]
            return {
                "logits": out,
                "allowed_count": int(allowed.sum()),
                "accepting": session.automaton.is_accepting(session.state),
            }

    def advance_session(self, session_id: str, token_id) -> dict:
        session = self._live_session(session_id)
        with session.lock:
            if session.finished:
                raise SidecarError("session-finished", "session finished; only close is allowed")
            if not isinstance(token_id, int) or isinstance(token_id, bool):
                raise SidecarError("bad-request", "token_id must be an integer")
            if not 0 <= token_id < self.tokenizer.vocab_size:
                raise SidecarError("illegal-token", f"token {token_id} out of range")
            automaton = session.automaton
            if token_id == self.tokenizer.eos_id:
                if not automaton.is_accepting(session.state):
                    raise SidecarError("illegal-token", "EOS is only legal at accepting states")
                session.finished = True
                return {"accepting": True, "finished": True}
            if token_id not in automaton.children(session.state):
                raise SidecarError(
                    "illegal-token", f"token {token_id} is not legal at this state"
                )
            session.state = automaton.step(session.state, token_id)
            return {"accepting": automaton.is_accepting(session.state), "finished": False}

    def close_session(self, session_id) -> None:
        if not isinstance(session_id, str):
            raise SidecarError("bad-request", "session_id must be a string")
        with self._table_lock:
            if session_id not in self._sessions:
                raise SidecarError("unknown-session", f"session {session_id!r} is not open")
            del self._sessions[session_id]

    @property
    def open_sessions(self) -> int:
        with self._table_lock:
            return len(self._sessions)

    # -- frame dispatch ----------------------------------------------------------

    def handle(self, msg) -> dict:
        """Dispatch one request frame; always returns a response frame."""
        if not isinstance(msg, dict):
            return _error_frame(None, None, "bad-frame", "frame must be a JSON object")
        seq = msg.get("seq")
        op = msg.get("op")
        session_id = msg.get("session_id")
        if op not in OPS:
            return _error_frame(msg, seq, "unknown-op", f"op must be one of {list(OPS)}")
        try:
            if op == "init":
                session = self.init_session(
                    session_id=session_id,
                    question=msg.get("question", ""),
                    topic_entities=msg.get("topic_entities", ()),
                    omega=msg.get("omega", 2.0),
                    space=msg.get("space", "logit"),
                    paths=msg.get("paths"),
                    kg_ref=msg.get("kg_ref"),
                    max_hops=msg.get("max_hops"),
                )
                return _ok_frame(
                    op, seq, session.session_id,
                    vocab_size=self.tokenizer.vocab_size,
                    num_paths=session.num_paths,
                    top1_path=session.top1_path,
                )
            if op == "step":
                body = self.step_session(
                    session_id, msg.get("logits_main"), msg.get("logits_mask")
                )
                return _ok_frame(op, seq, session_id, **body)
            if op == "advance":
                body = self.advance_session(session_id, msg.get("token_id"))
                return _ok_frame(op, seq, session_id, **body)
            self.close_session(session_id)
            return _ok_frame("close", seq, session_id)
        except SidecarError as exc:
            return _error_frame(msg, seq, exc.code, str(exc))
        except Exception as exc:  # crash-free contract: never propagate
            return _error_frame(msg, seq, "internal", f"{type(exc).__name__}: {exc}")


def _ok_frame(op: str, seq, session_id, **fields) -> dict:
    frame = {"ok": True, "op": op, "seq": seq, "session_id": session_id}
    frame.update(fields)
    return frame


def _error_frame(msg, seq, code: str, message: str) -> dict:
    frame = {
        "ok": False,
        "op": msg.get("op") if isinstance(msg, dict) else None,
        "seq": seq,
        "session_id": msg.get("session_id") if isinstance(msg, dict) else None,
        "error": {"code": code, "message": message},
    }
    return frame


def process_line(engine: SidecarEngine, raw: bytes) -> bytes:
    """One request frame in, one response frame out; never raises."""
    try:
        msg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        response = _error_frame(None, None, "bad-frame", f"invalid JSON frame: {exc}")
    else:
        response = engine.handle(msg)
    try:
        return json.dumps(response, allow_nan=False).encode("utf-8") + b"\n"
    except ValueError:
        fallback = _error_frame(None, response.get("seq"), "internal", "unserializable response")
        return json.dumps(fallback).encode("utf-8") + b"\n"


async def serve_tcp(
    engine: SidecarEngine, host: str = "127.0.0.1", port: int = 7071
) -> asyncio.AbstractServer:
    """Start the NDJSON TCP server; connections are handled concurrently."""

    async def handle_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        try:
            while True:
                try:
                    line = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    # mid-line overflow cannot be resynced reliably; answer
                    # once and drop the connection (the server stays up)
                    writer.write(
                        json.dumps(
                            _error_frame(None, None, "bad-frame", "frame too long")
                        ).encode("utf-8")
                        + b"\n"
                    )
                    await writer.drain()
                    break
                if not line:
                    break
                if not line.strip():
                    continue
                writer.write(process_line(engine, line))
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            writer.close()

    return await asyncio.start_server(handle_connection, host, port)


def serve_stdio(
    engine: SidecarEngine,
    stdin: BinaryIO | None = None,
    stdout: BinaryIO | None = None,
) -> None:
    """Serve frames over stdin/stdout for subprocess embedding."""
    inp = stdin if stdin is not None else sys.stdin.buffer
    out = stdout if stdout is not None else sys.stdout.buffer
    for line in inp:
        if not line.strip():
            continue
        out.write(process_line(engine, line))
        out.flush()

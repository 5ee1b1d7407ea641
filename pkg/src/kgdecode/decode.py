"""Constrained beam search over a pluggable logits provider.

Each hypothesis carries its own automaton state and the decoder maintains
both prompt branches, so every step is: query the provider twice, strengthen,
filter, extend. Finished hypotheses are frozen outside the beam and compete
in the final ranking by total log-probability (no length normalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .automaton import ROOT, TokenAutomaton
from .errors import DecodeExhaustedError, EmptyLanguageError
from .kg import PATH_DELIMITER
from .logits import PipelineConfig, filter_logits, softmax, strengthen
from .prompts import PromptPair
from .tokenizer import Tokenizer


@runtime_checkable
class LmProvider(Protocol):
    """Next-token logits for (prompt, generated suffix); must be
    deterministic given its inputs and safe for concurrent calls."""

    @property
    def vocab_size(self) -> int: ...

    def logits(self, prompt_ids: Sequence[int], generated_ids: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 20
    max_steps: int | None = None  # default: longest accepted sequence + 1
    strengthen: bool = True  # contrast the two prompt branches
    filter: bool = True  # constrain to automaton-legal tokens

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass(frozen=True)
class BeamState:
    """One in-flight hypothesis. `state` is None once a hypothesis has left
    the automaton (possible only with filtering disabled)."""

    generated: tuple[int, ...]
    state: int | None
    log_score: float
    finished: bool


@dataclass(frozen=True)
class RankedPath:
    text: str
    log_score: float
    token_ids: tuple[int, ...]
    accepted: bool


@dataclass(frozen=True)
class DecodeResult:
    """Ranked finished hypotheses, best first."""

    ranked: tuple[RankedPath, ...]

    @property
    def answer(self) -> str:
        """Final entity of the top-ranked path."""
        return self.ranked[0].text.split(PATH_DELIMITER)[-1]

    def answers(self, top_only: bool = False) -> tuple[str, ...]:
        """Deduplicated final entities in rank order."""
        if top_only:
            return (self.answer,)
        seen: list[str] = []
        for entry in self.ranked:
            tail = entry.text.split(PATH_DELIMITER)[-1]
            if tail not in seen:
                seen.append(tail)
        return tuple(seen)


def _trace_logits(
    trace: list,
    tokenizer: Tokenizer,
    step: int,
    hyp: BeamState,
    main: np.ndarray,
    mask: np.ndarray | None,
    strengthened: np.ndarray,
    filtered: np.ndarray | None,
    top_k: int,
) -> None:
    ranking = filtered if filtered is not None else strengthened
    top_ids = np.argsort(-ranking, kind="stable")[:top_k]
    trace.append(
        {
            "type": "logits",
            "step": step,
            "state": hyp.state,
            "prefix": list(hyp.generated),
            "top": [
                {
                    "id": int(i),
                    "piece": tokenizer.decode([int(i)]),
                    "raw_main": float(main[i]),
                    "raw_mask": None if mask is None else float(mask[i]),
                    "strengthened": float(strengthened[i]),
                    "filtered": None if filtered is None else float(filtered[i]),
                }
                for i in top_ids
            ],
        }
    )


def beam_decode(
    lm: LmProvider,
    prompts: PromptPair,
    automaton: TokenAutomaton,
    tokenizer: Tokenizer,
    cfg: DecodeConfig = DecodeConfig(),
    pcfg: PipelineConfig = PipelineConfig(),
    trace: list | None = None,
    trace_top_k: int = 5,
) -> DecodeResult:
    """Beam-decode both prompt branches under the automaton constraint.

    Returns up to beam_size finished hypotheses ranked by summed
    log-probability (ties broken by path text). With filtering enabled every
    returned path is automaton-accepted; hypotheses that would leave the
    automaton with filtering disabled keep decoding with `state=None` and
    come back flagged `accepted=False`.
    """
    if not automaton.accepted_paths:
        raise EmptyLanguageError("automaton accepts no sequences")

    main_ids = tuple(tokenizer.encode(prompts.original))
    mask_ids = tuple(tokenizer.encode(prompts.masked)) if cfg.strengthen else ()
    eos = tokenizer.eos_id
    max_steps = cfg.max_steps if cfg.max_steps is not None else automaton.max_accepted_len() + 1

    live: list[BeamState] = [BeamState(generated=(), state=ROOT, log_score=0.0, finished=False)]
    completed: list[BeamState] = []

    for step in range(max_steps):
        if not live:
            break
        # candidate, its step log-prob (for the trace)
        candidates: list[tuple[BeamState, float]] = []
        for hyp in live:
            main = np.asarray(lm.logits(main_ids, hyp.generated), dtype=np.float64)
            if cfg.strengthen:
                mask = np.asarray(lm.logits(mask_ids, hyp.generated), dtype=np.float64)
                z = strengthen(main, mask, pcfg)
            else:
                mask = None
                z = main
            if cfg.filter:
                assert hyp.state is not None
                filtered = filter_logits(z, automaton, hyp.state)
                probs = softmax(filtered)
                token_ids: Sequence[int] = sorted(automaton.allowed_tokens(hyp.state))
            else:
                filtered = None
                probs = softmax(z)
                token_ids = range(len(probs))
            if trace is not None:
                _trace_logits(trace, tokenizer, step, hyp, main, mask, z, filtered, trace_top_k)
            for token_id in token_ids:
                p = probs[token_id]
                if p <= 0.0:
                    continue
                log_score = hyp.log_score + math.log(p)
                generated = hyp.generated + (token_id,)
                if token_id == eos:
                    # EOS is only reachable at accepting states when filtering;
                    # unfiltered hypotheses may stop anywhere.
                    completed.append(BeamState(generated, hyp.state, log_score, True))
                    if trace is not None:
                        trace.append(
                            {
                                "type": "expand",
                                "step": step,
                                "prefix": list(hyp.generated),
                                "token": token_id,
                                "log_prob": math.log(p),
                                "state": hyp.state,
                                "finished": True,
                            }
                        )
                    continue
                if hyp.state is None:
                    new_state: int | None = None
                elif token_id in automaton.children(hyp.state):
                    new_state = automaton.step(hyp.state, token_id)
                else:
                    new_state = None  # off-automaton; only with filtering off
                candidates.append(
                    (BeamState(generated, new_state, log_score, False), math.log(p))
                )
        candidates.sort(key=lambda c: (-c[0].log_score, c[0].generated))
        kept = candidates[: cfg.beam_size]
        live = [hyp for hyp, _ in kept]
        if trace is not None:
            for hyp, step_log_prob in kept:
                trace.append(
                    {
                        "type": "expand",
                        "step": step,
                        "prefix": list(hyp.generated[:-1]),
                        "token": hyp.generated[-1],
                        "log_prob": step_log_prob,
                        "state": hyp.state,
                        "finished": False,
                    }
                )

    if not completed:
        raise DecodeExhaustedError([tokenizer.decode(h.generated) for h in live])

    entries = []
    for hyp in completed:
        path_ids = hyp.generated[:-1]
        text = tokenizer.decode(path_ids)
        entries.append(
            RankedPath(
                text=text,
                log_score=hyp.log_score,
                token_ids=path_ids,
                accepted=automaton.accepts(path_ids),
            )
        )
    entries.sort(key=lambda e: (-e.log_score, e.text))
    return DecodeResult(ranked=tuple(entries[: cfg.beam_size]))


class _LineTrie:
    """Prefix trie over the tokenizations of path lines found in a prompt,
    with per-node counts of how many lines pass through / end there."""

    __slots__ = ("children", "passes", "ends")

    def __init__(self) -> None:
        self.children: list[dict[int, int]] = [{}]
        self.passes: list[int] = [0]
        self.ends: list[int] = [0]

    def insert(self, ids: Sequence[int]) -> None:
        node = 0
        for token_id in ids:
            child = self.children[node].get(token_id)
            if child is None:
                child = len(self.children)
                self.children.append({})
                self.passes.append(0)
                self.ends.append(0)
                self.children[node][token_id] = child
            node = child
            self.passes[node] += 1
        self.ends[node] += 1

    def walk(self, ids: Sequence[int]) -> int | None:
        node = 0
        for token_id in ids:
            child = self.children[node].get(token_id)
            if child is None:
                return None
            node = child
        return node


class ToyLm:
    """Deterministic prompt-aware test double for an LLM.

    Logits are seed-keyed bigram noise (keyed on the last generated token)
    plus `bonus` for each path line in the prompt that continues through a
    token (and for EOS, per line completed by the generation so far). The
    bonus is additive over lines, so masking one line out of a branch lowers
    that branch by exactly one bonus along the whole masked path; the
    difference between the two branches is the masked line's indicator,
    which is the contrast the strengthening stage amplifies.

    With branch_sensitivity > 0 the noise additionally depends on a hash of
    the prompt ids, so the two branches disagree even off-path.
    """

    def __init__(
        self,
        tokenizer: Tokenizer,
        seed: int = 0,
        bonus: float = 8.0,
        noise_scale: float = 0.5,
        branch_sensitivity: float = 0.0,
        eos_bonus: float | None = None,
    ):
        self.tokenizer = tokenizer
        self.seed = seed
        self.bonus = bonus
        self.noise_scale = noise_scale
        self.branch_sensitivity = branch_sensitivity
        self.eos_bonus = bonus if eos_bonus is None else eos_bonus
        self._noise_cache: dict[tuple[int, int], np.ndarray] = {}
        self._branch_noise_cache: dict[tuple[int, int, int], np.ndarray] = {}
        self._prompt_cache: dict[tuple[int, ...], tuple[_LineTrie, int]] = {}

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.vocab_size

    def _noise(self, last: int) -> np.ndarray:
        key = (self.seed, last)
        cached = self._noise_cache.get(key)
        if cached is None:
            rng = np.random.default_rng((0x70C4, self.seed, last + 1))
            cached = (rng.random(self.vocab_size) - 0.5) * (2.0 * self.noise_scale)
            cached.setflags(write=False)
            self._noise_cache[key] = cached
        return cached

    def _branch_noise(self, last: int, branch: int) -> np.ndarray:
        key = (self.seed, last, branch)
        cached = self._branch_noise_cache.get(key)
        if cached is None:
            rng = np.random.default_rng((0xB4A7, self.seed, last + 1, branch))
            cached = (rng.random(self.vocab_size) - 0.5) * (2.0 * self.branch_sensitivity)
            cached.setflags(write=False)
            self._branch_noise_cache[key] = cached
        return cached

    def _prompt_info(self, prompt_ids: Sequence[int]) -> tuple[_LineTrie, int]:
        key = tuple(prompt_ids)
        cached = self._prompt_cache.get(key)
        if cached is None:
            text = self.tokenizer.decode(prompt_ids)
            trie = _LineTrie()
            for line in text.splitlines():
                line = line.strip()
                if PATH_DELIMITER in line:
                    trie.insert(self.tokenizer.encode(line))
            branch = hash(key) & 0x7FFFFFFF
            cached = (trie, branch)
            self._prompt_cache[key] = cached
        return cached

    def logits(self, prompt_ids: Sequence[int], generated_ids: Sequence[int]) -> np.ndarray:
        trie, branch = self._prompt_info(prompt_ids)
        last = generated_ids[-1] if generated_ids else -1
        out = self._noise(last).copy()
        if self.branch_sensitivity > 0.0:
            out += self._branch_noise(last, branch)
        node = trie.walk(generated_ids)
        if node is not None:
            for token_id, child in trie.children[node].items():
                out[token_id] += self.bonus * trie.passes[child]
            if trie.ends[node]:
                out[self.tokenizer.eos_id] += self.eos_bonus * trie.ends[node]
        return out


def toy_lm(tokenizer: Tokenizer, seed_table: dict | None = None) -> ToyLm:
    """Build a ToyLm from a seed table ({seed, bonus, noise_scale,
    branch_sensitivity, eos_bonus}; missing keys take the defaults)."""
    table = dict(seed_table or {})
    return ToyLm(
        tokenizer,
        seed=int(table.get("seed", 0)),
        bonus=float(table.get("bonus", 8.0)),
        noise_scale=float(table.get("noise_scale", 0.5)),
        branch_sensitivity=float(table.get("branch_sensitivity", 0.0)),
        eos_bonus=float(table["eos_bonus"]) if "eos_bonus" in table else None,
    )


class AdversarialLm:
    """Test double that pushes hard toward one planted (typically illegal)
    token sequence, then EOS. With filtering enabled the planted tokens are
    masked away and decoding stays legal; with filtering disabled the decoder
    reproduces the planted sequence."""

    def __init__(
        self,
        tokenizer: Tokenizer,
        planted_text: str,
        seed: int = 0,
        bonus: float = 12.0,
        noise_scale: float = 0.1,
    ):
        self.tokenizer = tokenizer
        self.planted_ids = tuple(tokenizer.encode(planted_text))
        self.seed = seed
        self.bonus = bonus
        self.noise_scale = noise_scale
        self._noise_cache: dict[int, np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.vocab_size

    def _noise(self, last: int) -> np.ndarray:
        cached = self._noise_cache.get(last)
        if cached is None:
            rng = np.random.default_rng((0xADCE, self.seed, last + 1))
            cached = (rng.random(self.vocab_size) - 0.5) * (2.0 * self.noise_scale)
            cached.setflags(write=False)
            self._noise_cache[last] = cached
        return cached

    def logits(self, prompt_ids: Sequence[int], generated_ids: Sequence[int]) -> np.ndarray:
        last = generated_ids[-1] if generated_ids else -1
        out = self._noise(last).copy()
        n = len(generated_ids)
        if tuple(generated_ids) == self.planted_ids[:n]:
            if n < len(self.planted_ids):
                out[self.planted_ids[n]] += self.bonus
            else:
                out[self.tokenizer.eos_id] += self.bonus
        return out

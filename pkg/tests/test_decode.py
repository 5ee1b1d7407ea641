from __future__ import annotations

import math

import numpy as np
import pytest

from kgdecode import (
    AdversarialLm,
    DecodeConfig,
    PipelineConfig,
    ReferenceTokenizer,
    ThresholdPolicy,
    ToyLm,
    beam_decode,
    build_prompts,
    build_vocabulary,
    compile_paths,
    default_template,
    score_paths,
    step_distribution,
    textualize,
    toy_lm,
)
from kgdecode.automaton import ROOT
from kgdecode.errors import DecodeExhaustedError, EmptyLanguageError


@pytest.fixture(scope="module")
def setup(embedder, guitar_question, music_paths, music_tokenizer):
    pairs = [(p, textualize(p)) for p in music_paths]
    sps = score_paths(embedder, guitar_question, pairs)
    automaton = compile_paths(music_tokenizer, [e.text for e in sps.entries])
    prompts = build_prompts(default_template(), guitar_question, sps)
    lm = ToyLm(music_tokenizer, seed=1)
    return lm, prompts, automaton, music_tokenizer


# --- toy LM ----------------------------------------------------------------------


def test_toy_lm_deterministic(setup):
    lm, prompts, automaton, tok = setup
    prompt_ids = tok.encode(prompts.original)
    a = lm.logits(prompt_ids, [3, 5])
    b = lm.logits(prompt_ids, [3, 5])
    assert np.array_equal(a, b)
    assert a.shape == (tok.vocab_size,)
    assert np.isfinite(a).all()


def test_toy_lm_branch_sensitivity():
    vocab = build_vocabulary(["alpha beta gamma delta"], extra_pieces=[" → ", "\n"])
    tok = ReferenceTokenizer(vocab)
    # two path lines with different first tokens; masking one changes the
    # continuation bonus at the root
    original = "alpha → beta\ngamma → delta"
    masked = "[MASK]\ngamma → delta"
    lm = toy_lm(tok, {"seed": 3})
    main = lm.logits(tok.encode(original), [])
    mask = lm.logits(tok.encode(masked), [])
    assert not np.array_equal(main, mask)


def test_toy_lm_factory_reads_seed_table():
    vocab = build_vocabulary(["a b"])
    tok = ReferenceTokenizer(vocab)
    lm = toy_lm(tok, {"seed": 9, "bonus": 2.5, "noise_scale": 0.25, "branch_sensitivity": 0.5})
    assert lm.seed == 9 and lm.bonus == 2.5
    assert lm.noise_scale == 0.25 and lm.branch_sensitivity == 0.5


# --- beam decode -------------------------------------------------------------------


def greedy_walk(lm, prompts, automaton, tok, pcfg):
    """Stepwise-argmax oracle for beam size 1."""
    main_ids = tok.encode(prompts.original)
    mask_ids = tok.encode(prompts.masked)
    generated: list[int] = []
    state = ROOT
    total = 0.0
    while True:
        probs = step_distribution(
            lm.logits(main_ids, generated), lm.logits(mask_ids, generated),
            pcfg, automaton, state,
        )
        token = int(np.argmax(probs))
        total += math.log(probs[token])
        if token == tok.eos_id:
            return generated, total
        generated.append(token)
        state = automaton.step(state, token)


def test_beam_one_equals_greedy(setup):
    lm, prompts, automaton, tok = setup
    pcfg = PipelineConfig(omega=2.0)
    result = beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=1), pcfg)
    oracle_ids, oracle_score = greedy_walk(lm, prompts, automaton, tok, pcfg)
    assert list(result.ranked[0].token_ids) == oracle_ids
    assert result.ranked[0].log_score == pytest.approx(oracle_score, abs=1e-9)


def test_single_path_automaton_forced(setup, music_tokenizer, guitar_question, embedder):
    text = "Help Me Make It Thru the Night → music.composition.composer → Joe Walsh"
    automaton = compile_paths(music_tokenizer, [text])
    sps = score_paths(embedder, guitar_question, [(None, text)])
    prompts = build_prompts(default_template(), guitar_question, sps)
    lm = ToyLm(music_tokenizer, seed=2)
    result = beam_decode(lm, prompts, automaton, music_tokenizer)
    assert len(result.ranked) == 1
    assert result.ranked[0].text == text
    # every step had exactly one allowed continuation, so the walk is free
    assert result.ranked[0].log_score == pytest.approx(0.0, abs=1e-12)
    assert result.answer == "Joe Walsh"


def exhaustive_oracle(lm, prompts, automaton, tok, pcfg):
    """Score every accepted sequence by replaying step_distribution."""
    main_ids = tok.encode(prompts.original)
    mask_ids = tok.encode(prompts.masked)
    results = []
    for ids in automaton.enumerate_accepted():
        total = 0.0
        state = ROOT
        for step, token in enumerate(list(ids) + [tok.eos_id]):
            probs = step_distribution(
                lm.logits(main_ids, list(ids[:step])), lm.logits(mask_ids, list(ids[:step])),
                pcfg, automaton, state,
            )
            total += math.log(probs[token])
            if token != tok.eos_id:
                state = automaton.step(state, token)
        results.append((tok.decode(ids), total, tuple(ids)))
    results.sort(key=lambda r: (-r[1], r[0]))
    return results


def test_beam_matches_exhaustive_enumeration(setup):
    lm, prompts, automaton, tok = setup
    pcfg = PipelineConfig(omega=2.0)
    result = beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=20), pcfg)
    oracle = exhaustive_oracle(lm, prompts, automaton, tok, pcfg)
    assert len(result.ranked) == len(oracle)
    for got, (text, score, ids) in zip(result.ranked, oracle):
        assert got.text == text
        assert got.token_ids == ids
        assert got.log_score == pytest.approx(score, abs=1e-9)


def test_all_outputs_accepted_and_score_additive(setup):
    lm, prompts, automaton, tok = setup
    pcfg = PipelineConfig(omega=2.0)
    result = beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=20), pcfg)
    main_ids = tok.encode(prompts.original)
    mask_ids = tok.encode(prompts.masked)
    for entry in result.ranked:
        assert entry.accepted
        assert automaton.accepts(entry.token_ids)
        # replay the chosen tokens through step_distribution
        total = 0.0
        state = ROOT
        for step, token in enumerate(list(entry.token_ids) + [tok.eos_id]):
            probs = step_distribution(
                lm.logits(main_ids, list(entry.token_ids[:step])),
                lm.logits(mask_ids, list(entry.token_ids[:step])),
                pcfg, automaton, state,
            )
            total += math.log(probs[token])
            if token != tok.eos_id:
                state = automaton.step(state, token)
        assert total == pytest.approx(entry.log_score, abs=1e-9)


def test_beam_monotone_in_size(setup):
    lm, prompts, automaton, tok = setup
    best = None
    for b in (1, 2, 5, 20):
        result = beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=b))
        top = result.ranked[0].log_score
        if best is not None:
            assert top >= best - 1e-12
        best = top


def test_decode_exhausted(setup):
    lm, prompts, automaton, tok = setup
    with pytest.raises(DecodeExhaustedError):
        beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=2, max_steps=1))


def test_empty_automaton_rejected(setup, music_tokenizer):
    lm, prompts, _, tok = setup
    empty = compile_paths(music_tokenizer, [])
    with pytest.raises(EmptyLanguageError):
        beam_decode(lm, prompts, empty, tok)


def test_no_filter_ablation_emits_illegal_path(setup, music_tokenizer):
    _, prompts, automaton, tok = setup
    illegal = "Help Me Make It Thru the Night → music.composition.composer → Composition"
    adversary = AdversarialLm(music_tokenizer, illegal, seed=4)
    result = beam_decode(
        adversary, prompts, automaton, tok,
        DecodeConfig(beam_size=3, filter=False, max_steps=automaton.max_accepted_len() + 1),
    )
    assert any(not e.accepted for e in result.ranked)
    assert result.ranked[0].text == illegal
    # with the filter on, the same adversary cannot leave the automaton
    constrained = beam_decode(adversary, prompts, automaton, tok, DecodeConfig(beam_size=3))
    assert all(e.accepted for e in constrained.ranked)


def test_no_strengthen_skips_mask_branch(setup):
    lm, prompts, automaton, tok = setup

    calls = []

    class SpyLm:
        vocab_size = tok.vocab_size

        def logits(self, prompt_ids, generated_ids):
            calls.append(tuple(prompt_ids))
            return lm.logits(prompt_ids, generated_ids)

    beam_decode(SpyLm(), prompts, automaton, tok, DecodeConfig(beam_size=2, strengthen=False))
    assert len({c for c in calls}) == 1  # only the original branch was queried


def test_trace_records(setup):
    lm, prompts, automaton, tok = setup
    trace: list = []
    beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=2), trace=trace)
    kinds = {r["type"] for r in trace}
    assert kinds == {"logits", "expand"}
    logits_records = [r for r in trace if r["type"] == "logits"]
    assert all(len(r["top"]) <= 5 for r in logits_records)
    assert all({"id", "piece", "raw_main", "raw_mask", "strengthened", "filtered"}
               == set(r["top"][0]) for r in logits_records)


def test_answers_deduplicate_in_rank_order(setup):
    lm, prompts, automaton, tok = setup
    result = beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=20))
    answers = result.answers()
    assert answers[0] == result.answer
    assert len(set(answers)) == len(answers)
    assert result.answers(top_only=True) == (result.answer,)


def test_every_beam_prefix_walks_the_automaton(setup):
    # in-flight hypotheses, not just finished ones, must stay on live states
    lm, prompts, automaton, tok = setup
    trace: list = []
    beam_decode(lm, prompts, automaton, tok, DecodeConfig(beam_size=5), trace=trace)
    prefixes = [
        tuple(r["prefix"]) + (r["token"],)
        for r in trace
        if r["type"] == "expand" and not r["finished"]
    ]
    assert prefixes
    for prefix in prefixes:
        state = automaton.walk(prefix)  # DeadStateError would fail the test
        assert state is not None

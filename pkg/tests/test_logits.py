from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgdecode import (
    PipelineConfig,
    ReferenceTokenizer,
    build_vocabulary,
    compile_paths,
    filter_logits,
    softmax,
    step_distribution,
    strengthen,
)
from kgdecode.automaton import ROOT
from kgdecode.errors import DeadEndError, LogitsShapeError, LogitsValueError
from kgdecode.logits import NEG_INF


@pytest.fixture(scope="module")
def topic_tokenizer():
    # one-piece-per-word vocabulary around the topic/art/award/music example
    vocab = build_vocabulary(["topic art award music genre jazz"], extra_pieces=[" → "])
    return ReferenceTokenizer(vocab)


@pytest.fixture(scope="module")
def genre_automaton(topic_tokenizer):
    return compile_paths(topic_tokenizer, ["topic → music → jazz", "topic → genre → jazz"])


def rand_logits(rng, n):
    return rng.normal(0.0, 3.0, n)


# --- strengthen -------------------------------------------------------------------


def test_omega_one_returns_main_exactly():
    main = np.array([0.3, -1.5, 7.25, 1e-12])
    mask = np.array([9.9, 2.0, -3.25, 0.57])
    out = strengthen(main, mask, PipelineConfig(omega=1.0))
    assert np.array_equal(out, main)
    assert out is not main


def test_omega_zero_returns_mask_exactly():
    main = np.array([0.3, -1.5])
    mask = np.array([9.9, 2.0])
    out = strengthen(main, mask, PipelineConfig(omega=0.0))
    assert np.array_equal(out, mask)


def test_omega_two_numeric_case():
    out = strengthen(np.array([1.0, 2.0]), np.array([0.0, 3.0]), PipelineConfig(omega=2.0))
    assert np.array_equal(out, np.array([2.0, 1.0]))


def test_omega_minus_one_weakening_supported():
    main = np.array([1.0, 2.0])
    mask = np.array([0.0, 3.0])
    out = strengthen(main, mask, PipelineConfig(omega=-1.0))
    assert np.allclose(out, -1.0 * main + 2.0 * mask)


def test_shape_and_value_errors():
    with pytest.raises(LogitsShapeError):
        strengthen(np.zeros(3), np.zeros(4), PipelineConfig())
    with pytest.raises(LogitsShapeError):
        strengthen(np.zeros((2, 2)), np.zeros((2, 2)), PipelineConfig())
    with pytest.raises(LogitsValueError):
        strengthen(np.array([1.0, np.nan]), np.zeros(2), PipelineConfig())
    with pytest.raises(ValueError):
        PipelineConfig(omega=float("inf"))
    with pytest.raises(ValueError):
        PipelineConfig(space="other")


def test_probability_space_matches_manual_mixe():
    rng = np.random.default_rng(0)
    main = rand_logits(rng, 8)
    mask = rand_logits(rng, 8)
    for omega in (0.25, 0.75, 2.0, -1.0):
        out = strengthen(main, mask, PipelineConfig(omega=omega, space="probability"))
        manual = omega * softmax(main) + (1.0 - omega) * softmax(mask)
        assert np.all(np.isfinite(out))
        positive = manual > 1e-290
        assert np.allclose(np.exp(out[positive]), manual[positive], rtol=1e-9)


def test_probability_space_identities_still_exact():
    main = np.array([0.5, 1.5, -2.0])
    mask = np.array([1.0, 0.0, 3.0])
    assert np.array_equal(strengthen(main, mask, PipelineConfig(1.0, "probability")), main)
    assert np.array_equal(strengthen(main, mask, PipelineConfig(0.0, "probability")), mask)


@given(
    st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=32),
    st.data(),
)
def test_identity_laws_hold_for_any_finite_vectors(main_list, data):
    main = np.asarray(main_list)
    mask = np.asarray(
        data.draw(
            st.lists(st.floats(-100, 100, allow_nan=False),
                     min_size=len(main_list), max_size=len(main_list))
        )
    )
    assert np.array_equal(strengthen(main, mask, PipelineConfig(omega=1.0)), main)
    assert np.array_equal(strengthen(main, mask, PipelineConfig(omega=0.0)), mask)


@given(st.data())
def test_filter_support_property(topic_tokenizer, genre_automaton, data):
    states = list(genre_automaton.states())
    state = data.draw(st.sampled_from(states))
    size = topic_tokenizer.vocab_size
    z = np.asarray(
        data.draw(st.lists(st.floats(-50, 50, allow_nan=False),
                           min_size=size, max_size=size))
    )
    probs = softmax(filter_logits(z, genre_automaton, state))
    allowed = genre_automaton.mask_vector(state)
    assert np.all(probs[~allowed] == 0.0)
    assert abs(probs.sum() - 1.0) <= 1e-9
    # relative order within the allowed set is untouched
    filtered = filter_logits(z, genre_automaton, state)
    kept = list(np.nonzero(allowed)[0])
    assert sorted(kept, key=lambda t: (z[t], t)) == sorted(
        kept, key=lambda t: (filtered[t], t)
    )


def test_contrast_gap_monotone_in_omega():
    rng = np.random.default_rng(42)
    for _ in range(200):
        main = rand_logits(rng, 12)
        mask = rand_logits(rng, 12)
        diff = main - mask
        i, j = int(np.argmax(diff)), int(np.argmin(diff))
        if diff[i] <= diff[j] or main[i] < main[j]:
            continue
        omega_lo, omega_hi = sorted(rng.uniform(1.0, 8.0, 2))
        lo = strengthen(main, mask, PipelineConfig(omega=omega_lo))
        hi = strengthen(main, mask, PipelineConfig(omega=omega_hi))
        assert hi[i] - hi[j] >= lo[i] - lo[j] - 1e-9


# --- filter ---------------------------------------------------------------------


def test_full_vocabulary_mask_is_noop(topic_tokenizer):
    vocab = topic_tokenizer.vocab
    automaton = compile_paths(topic_tokenizer, list(vocab.pieces))
    rng = np.random.default_rng(1)
    z = rand_logits(rng, vocab.size)
    out = filter_logits(z, automaton, ROOT)
    assert np.array_equal(out, z)


def test_disallowed_tokens_get_zero_probability(topic_tokenizer, genre_automaton):
    vocab = topic_tokenizer.vocab
    art = vocab.piece_to_id["art"]
    award = vocab.piece_to_id["award"]
    rng = np.random.default_rng(2)
    z = rand_logits(rng, vocab.size)
    z[art] = 50.0  # illegal tokens carry the highest raw logits
    z[award] = 49.0
    state = genre_automaton.walk(topic_tokenizer.encode("topic → "))
    probs = softmax(filter_logits(z, genre_automaton, state))
    assert probs[art] == 0.0
    assert probs[award] == 0.0
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_filtered_softmax_normalizes_100_random(topic_tokenizer, genre_automaton):
    rng = np.random.default_rng(3)
    states = list(genre_automaton.states())
    for _ in range(100):
        state = states[rng.integers(len(states))]
        z = rand_logits(rng, topic_tokenizer.vocab_size)
        probs = softmax(filter_logits(z, genre_automaton, state))
        allowed = genre_automaton.mask_vector(state)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(probs[~allowed] == 0.0)


def test_filter_preserves_order_within_allowed(topic_tokenizer, genre_automaton):
    rng = np.random.default_rng(4)
    z = rand_logits(rng, topic_tokenizer.vocab_size)
    out = filter_logits(z, genre_automaton, ROOT)
    allowed = sorted(genre_automaton.allowed_tokens(ROOT))
    assert [z[t] for t in allowed] == [out[t] for t in allowed]


def test_dead_end_error(topic_tokenizer):
    empty = compile_paths(topic_tokenizer, [])
    with pytest.raises(DeadEndError):
        filter_logits(np.zeros(topic_tokenizer.vocab_size), empty, ROOT)


def test_filter_length_mismatch(genre_automaton):
    with pytest.raises(LogitsShapeError):
        filter_logits(np.zeros(3), genre_automaton, ROOT)


def test_neg_inf_sentinel_is_finite_most_negative(topic_tokenizer, genre_automaton):
    z = np.zeros(topic_tokenizer.vocab_size)
    out = filter_logits(z, genre_automaton, ROOT)
    assert np.isfinite(out).all()
    blocked = ~genre_automaton.mask_vector(ROOT)
    assert np.all(out[blocked] == NEG_INF)


# --- step_distribution ------------------------------------------------------------


def test_single_allowed_token_probability_one(topic_tokenizer):
    automaton = compile_paths(topic_tokenizer, ["topic → music → jazz"])
    rng = np.random.default_rng(5)
    main = rand_logits(rng, topic_tokenizer.vocab_size)
    mask = rand_logits(rng, topic_tokenizer.vocab_size)
    probs = step_distribution(main, mask, PipelineConfig(), automaton, ROOT)
    first = topic_tokenizer.encode("topic → music → jazz")[0]
    assert probs[first] == 1.0
    assert probs.sum() == 1.0


def test_identity_composition_equals_softmax_main(topic_tokenizer):
    vocab = topic_tokenizer.vocab
    automaton = compile_paths(topic_tokenizer, list(vocab.pieces))
    rng = np.random.default_rng(6)
    main = rand_logits(rng, vocab.size)
    mask = rand_logits(rng, vocab.size)
    probs = step_distribution(main, mask, PipelineConfig(omega=1.0), automaton, ROOT)
    assert np.allclose(probs, softmax(main), atol=0, rtol=0)


def test_composition_matches_scalar_recomputation(topic_tokenizer, genre_automaton):
    rng = np.random.default_rng(7)
    states = list(genre_automaton.states())
    omega = 2.0
    for _ in range(100):
        state = states[rng.integers(len(states))]
        main = rand_logits(rng, topic_tokenizer.vocab_size)
        mask = rand_logits(rng, topic_tokenizer.vocab_size)
        probs = step_distribution(main, mask, PipelineConfig(omega=omega), genre_automaton, state)
        allowed = genre_automaton.allowed_tokens(state)
        combined = {t: omega * main[t] + (1 - omega) * mask[t] for t in allowed}
        peak = max(combined.values())
        total = sum(math.exp(v - peak) for v in combined.values())
        for t in range(topic_tokenizer.vocab_size):
            expect = math.exp(combined[t] - peak) / total if t in allowed else 0.0
            assert probs[t] == pytest.approx(expect, abs=1e-9)

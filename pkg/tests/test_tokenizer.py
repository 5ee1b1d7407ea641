from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from kgdecode import (
    ReferenceTokenizer,
    Vocabulary,
    build_vocabulary,
    decode,
    encode,
    load_vocabulary,
    save_vocabulary,
)
from kgdecode.errors import EncodingError, VocabularyError

NAME_VOCAB = Vocabulary(
    pieces=("<bos>", "<eos>", "[MASK]", " ", "J", "Joe", "W", "Walsh",
            "a", "e", "h", "l", "o", "s"),
    bos_id=0,
    eos_id=1,
    mask_id=2,
)


def greedy_oracle(vocab: Vocabulary, text: str) -> list[int]:
    """Independent greedy matcher: scan pieces sorted by length."""
    by_len = sorted(range(vocab.size), key=lambda i: (-len(vocab.pieces[i]), i))
    ids: list[int] = []
    pos = 0
    while pos < len(text):
        for i in by_len:
            if text.startswith(vocab.pieces[i], pos):
                ids.append(i)
                pos += len(vocab.pieces[i])
                break
        else:
            raise AssertionError(f"oracle stuck at {pos}")
    return ids


def test_encode_empty():
    assert encode(NAME_VOCAB, "") == []


def test_encode_greedy_longest_match_frozen():
    # greedy picks "Joe" over "J", "Walsh" over "W"
    assert encode(NAME_VOCAB, "Joe Walsh") == [5, 3, 7]


def test_encode_matches_independent_greedy_oracle():
    for text in ("Joe Walsh", "JoeJoe", "halo shoe", "W W W", "Walshs"):
        assert encode(NAME_VOCAB, text) == greedy_oracle(NAME_VOCAB, text)


def test_encode_error_names_byte_offset():
    with pytest.raises(EncodingError) as exc:
        encode(NAME_VOCAB, "Joe Q")
    assert exc.value.byte_offset == len("Joe ".encode("utf-8"))


def test_decode_empty():
    assert decode(NAME_VOCAB, []) == ""


def test_decode_strips_reserved_when_asked():
    assert decode(NAME_VOCAB, [NAME_VOCAB.bos_id], strip_special=True) == ""
    assert decode(NAME_VOCAB, [NAME_VOCAB.bos_id]) == "<bos>"


def test_decode_out_of_range():
    with pytest.raises(VocabularyError):
        decode(NAME_VOCAB, [NAME_VOCAB.size])


def test_roundtrip_fixture_corpus():
    for text in ("Joe Walsh", "hello", "shoal", "Walsh Walsh Walsh"):
        assert decode(NAME_VOCAB, encode(NAME_VOCAB, text)) == text


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz 0123456789", max_size=60))
def test_roundtrip_random_ascii(text):
    vocab = build_vocabulary(["abcdefghijklmnopqrstuvwxyz 0123456789", "hello world"])
    assert decode(vocab, encode(vocab, text)) == text


def test_encode_is_pure():
    vocab_a = build_vocabulary(["the quick brown fox"])
    vocab_b = build_vocabulary(["the quick brown fox"])
    assert vocab_a == vocab_b
    assert encode(vocab_a, "the fox") == encode(vocab_b, "the fox")


def test_vocabulary_invariants():
    with pytest.raises(VocabularyError):
        Vocabulary(pieces=(), bos_id=0, eos_id=1, mask_id=2)
    with pytest.raises(VocabularyError):
        Vocabulary(pieces=("a", "", "c"), bos_id=0, eos_id=1, mask_id=2)
    with pytest.raises(VocabularyError):
        Vocabulary(pieces=("a", "b", "c"), bos_id=0, eos_id=0, mask_id=2)
    with pytest.raises(VocabularyError):
        Vocabulary(pieces=("a", "b", "c"), bos_id=0, eos_id=1, mask_id=3)


def test_build_vocabulary_covers_words_and_chars():
    vocab = build_vocabulary(["Akher Saa → Egypt"], extra_pieces=[" → "])
    tok = ReferenceTokenizer(vocab)
    ids = tok.encode("Akher Saa → Egypt")
    assert tok.decode(ids) == "Akher Saa → Egypt"
    # whole words come out as single pieces
    assert "Akher" in [vocab.pieces[i] for i in ids]
    assert " → " in [vocab.pieces[i] for i in ids]


def test_mask_piece_is_single_token():
    vocab = build_vocabulary(["some text"])
    ids = encode(vocab, "[MASK]")
    assert ids == [vocab.mask_id]


def test_save_load_roundtrip(tmp_path):
    vocab = build_vocabulary(
        ["line one", "Akher Saa → Egypt"],
        extra_pieces=[" → ", "\n", "\t", 'quote"piece'],
    )
    path = str(tmp_path / "vocab.txt")
    save_vocabulary(vocab, path)
    loaded = load_vocabulary(path)
    assert loaded == vocab


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("not json\n", encoding="utf-8")
    with pytest.raises(VocabularyError):
        load_vocabulary(str(path))

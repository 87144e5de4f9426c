import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_bpe
from unitasr.bpe import (
    BPEError, MergeTable, apply_bpe, learn_bpe, learn_bpe_with_state, restore, segment,
    subword_vocab_size,
)


def test_single_merge():
    assert learn_bpe({"ab": 3, "ac": 1}, 1).merges == (("a", "b"),)


def test_zero_merges():
    assert learn_bpe({"abc": 5}, 0).merges == ()


def test_early_stop():
    assert learn_bpe({"aa": 2}, 2).merges == (("a", "a"),)


def test_hapax_pairs_not_merged():
    assert learn_bpe({"ab": 1, "cd": 1}, 5).merges == ()


def test_tie_breaks_lexicographically():
    assert learn_bpe({"ba": 2, "dc": 2}, 1).merges == (("b", "a"),)


def test_empty_corpus():
    with pytest.raises(BPEError):
        learn_bpe({}, 3)


def test_marker_examples():
    table = MergeTable((("一", "种"),))
    assert apply_bpe("信念", table) == ["信@@", "念"]
    assert apply_bpe("一种", table) == ["一种"]
    assert apply_bpe("好", table) == ["好"]


def test_restore_examples():
    assert restore(["一种", "信@@", "念"]) == ["一种", "信念"]
    assert restore([]) == []
    assert restore(["a@@", "b@@", "c"]) == ["abc"]
    with pytest.raises(BPEError):
        restore(["a", "b@@"])


def test_vocab_size_identity():
    assert subword_vocab_size(100, 0) == 100
    assert subword_vocab_size(11035 - 5000, 5000) + 4 == 11039


def test_toy_symbol_count():
    counts = {"abc": 4, "ab": 2, "c": 1}
    table = learn_bpe(counts, 2)
    assert table.num_merges == 2
    assert table.symbols("abc") == {"a", "b", "c", "ab", "abc"}


def test_merges_file_roundtrip(tmp_path):
    table = learn_bpe({"一种": 3, "信念": 2, "一念": 2}, 3)
    table.save(tmp_path / "m.txt")
    text = (tmp_path / "m.txt").read_text(encoding="utf-8").splitlines()
    assert text[0] == f"#bpe v1 {table.num_merges}"
    assert MergeTable.load(tmp_path / "m.txt") == table


def test_merges_file_count_mismatch(tmp_path):
    (tmp_path / "m.txt").write_text("#bpe v1 2\na b\n", encoding="utf-8")
    with pytest.raises(BPEError):
        MergeTable.load(tmp_path / "m.txt")


corpora = st.dictionaries(
    st.text(alphabet="abcd", min_size=1, max_size=7), st.integers(1, 6), min_size=1, max_size=20
)


@given(corpora, st.integers(0, 30))
def test_matches_brute_force(counts, n):
    table, final = learn_bpe_with_state(counts, n)
    merges, words = brute_force_bpe(counts, n)
    assert list(table.merges) == merges
    assert final == words


@given(corpora, st.integers(0, 30))
def test_learner_applier_agree(counts, n):
    table, final = learn_bpe_with_state(counts, n)
    for w in counts:
        assert segment(w, table) == final[w]
        assert restore(apply_bpe(w, table)) == [w]


@given(st.text(alphabet="abcde", min_size=1, max_size=10))
def test_empty_table_gives_characters(word):
    assert segment(word, MergeTable()) == list(word)


@given(corpora, st.integers(2, 30), st.text(alphabet="abcd", min_size=1, max_size=9))
def test_prefix_tables_coarsen(counts, n, word):
    table = learn_bpe(counts, n)
    sizes = [len(segment(word, table.prefix(k))) for k in range(table.num_merges + 1)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))

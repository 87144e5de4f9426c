import itertools

import pytest
from hypothesis import given, strategies as st

from oracles import brute_distance
from unitasr.score import ErrorCounts, cer_tokenize, corpus_cer, edit_distance, score_pair


def test_tokenize_examples():
    assert cer_tokenize("一种信念") == ["一", "种", "信", "念"]
    assert cer_tokenize("OK好的") == ["OK", "好", "的"]
    assert cer_tokenize("") == []
    assert cer_tokenize("一种 信念") == ["一", "种", "信", "念"]


def test_edit_examples():
    assert edit_distance(list("abc"), list("abc")) == ErrorCounts(0, 0, 0, 3)
    assert edit_distance(["一", "种", "信", "念"], ["一", "种", "信", "年"]) == ErrorCounts(1, 0, 0, 4)
    assert edit_distance(["一", "种"], ["一", "个", "种"]) == ErrorCounts(0, 1, 0, 2)
    assert edit_distance([], ["a"]) == ErrorCounts(0, 1, 0, 0)
    assert edit_distance(["a", "b"], []) == ErrorCounts(0, 0, 2, 2)


def test_backtrace_prefers_substitution():
    # "ab" -> "ba" costs 2: two substitutions rather than an insertion plus a deletion
    assert edit_distance(list("ab"), list("ba")) == ErrorCounts(2, 0, 0, 2)


def test_corpus_examples():
    assert corpus_cer([("一种信念", "一种信念"), ("OK 好", "ok 好")]) == 0.0
    assert corpus_cer([("一种信念", "一种信年")]) == 25.0
    assert corpus_cer([("一种信念", "")]) == 100.0
    assert corpus_cer([("好", "好好好好")]) == 300.0
    with pytest.raises(ValueError):
        corpus_cer([("", "好")])


def test_corpus_pooled_not_averaged():
    pairs = [("一", "二"), ("一种信念", "一种信念")]
    assert corpus_cer(pairs) == pytest.approx(100 * 1 / 5)


def test_case_insensitive_latin():
    assert score_pair("OK 好", "ok 好").errors == 0


def all_lists(n, alphabet="abc"):
    for k in range(n + 1):
        yield from itertools.product(alphabet, repeat=k)


def test_exhaustive_short_lists_full_grid():
    lists = list(all_lists(4))
    for a in lists:
        for b in lists:
            c = edit_distance(a, b)
            assert c.errors == brute_distance(a, b)
            assert c.ref_length == len(a) >= c.substitutions + c.deletions
            assert len(b) == len(a) - c.deletions + c.insertions


tokens = st.lists(st.sampled_from("abc"), max_size=8)


@given(tokens, tokens, tokens)
def test_metric_properties(a, b, c):
    ab, ba = edit_distance(a, b), edit_distance(b, a)
    assert edit_distance(a, a).errors == 0
    assert ab.errors == ba.errors
    assert ab.insertions - ab.deletions == ba.deletions - ba.insertions
    assert ab.errors <= edit_distance(a, c).errors + edit_distance(c, b).errors


@given(st.lists(st.tuples(st.text("一种信念OK ", min_size=1), st.text("一种信念OK ")), min_size=1, max_size=6),
       st.randoms())
def test_corpus_order_invariant(pairs, rnd):
    if not any(cer_tokenize(r) for r, _ in pairs):
        return
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert corpus_cer(pairs) == corpus_cer(shuffled)

"""Byte-pair-encoding sub-word units: learning, application and restoration.

Symbols inside a word are stored without markers. The ``@@`` continuation
marker is attached only when a segmentation is emitted, as a suffix on every
symbol except the last one of the word.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

MARKER = "@@"


class BPEError(ValueError):
    pass


@dataclass(frozen=True)
class MergeTable:
    merges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise BPEError("duplicate merge in table")

    @property
    def num_merges(self) -> int:
        return len(self.merges)

    def ranks(self) -> dict[tuple[str, str], int]:
        return {pair: i for i, pair in enumerate(self.merges)}

    def prefix(self, n: int) -> "MergeTable":
        return MergeTable(self.merges[:n])

    def symbols(self, alphabet) -> set[str]:
        """Symbol inventory: the initial alphabet plus one new symbol per merge."""
        out = set(alphabet)
        out.update(a + b for a, b in self.merges)
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#bpe v1 {self.num_merges}\n")
            for a, b in self.merges:
                f.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "MergeTable":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("#bpe v1"):
            raise BPEError(f"{path}: missing '#bpe v1' header")
        head = lines[0].split()
        if len(head) != 3 or not head[2].isdigit():
            raise BPEError(f"{path}: malformed header {lines[0]!r}")
        merges = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise BPEError(f"{path}:{lineno}: expected 'left right'")
            merges.append((parts[0], parts[1]))
        if len(merges) != int(head[2]):
            raise BPEError(
                f"{path}: header declares {head[2]} merges, found {len(merges)}"
            )
        return cls(tuple(merges))


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    a, b = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def _pairs(symbols: tuple[str, ...]):
    return zip(symbols, symbols[1:])


class _Learner:
    """Incremental pair statistics over weighted word types."""

    def __init__(self, word_counts: dict[str, int]):
        words = sorted(w for w in word_counts if w)
        self.words = [tuple(w) for w in words]
        self.counts = [word_counts[w] for w in words]
        self.stats: dict[tuple[str, str], int] = defaultdict(int)
        self.where: dict[tuple[str, str], set[int]] = defaultdict(set)
        for i, syms in enumerate(self.words):
            self._add(i, syms, 1)
        self.heap = [(-c, p) for p, c in self.stats.items()]
        heapq.heapify(self.heap)
        self.inventory = {ch for syms in self.words for ch in syms}

    def _add(self, i, syms, sign):
        c = self.counts[i] * sign
        for p in _pairs(syms):
            self.stats[p] += c
            if sign > 0:
                self.where[p].add(i)

    def best(self):
        """Most frequent pair whose merged symbol is unused; ties lexicographic."""
        skipped = []
        found = None
        while self.heap:
            negc, pair = heapq.heappop(self.heap)
            if self.stats.get(pair, 0) != -negc:
                continue  # stale entry
            if pair[0] + pair[1] in self.inventory:
                skipped.append((negc, pair))
                continue
            found = (-negc, pair)
            heapq.heappush(self.heap, (negc, pair))
            break
        for item in skipped:
            heapq.heappush(self.heap, item)
        return found

    def merge(self, pair):
        touched = set()
        for i in sorted(self.where.pop(pair, ())):
            old = self.words[i]
            if pair not in set(_pairs(old)):
                continue
            new = _merge_word(old, pair)
            self._add(i, old, -1)
            self._add(i, new, 1)
            self.words[i] = new
            touched.update(_pairs(old))
            touched.update(_pairs(new))
        for p in touched:
            c = self.stats.get(p, 0)
            if c > 0:
                heapq.heappush(self.heap, (-c, p))
            else:
                self.stats.pop(p, None)
        self.inventory.add(pair[0] + pair[1])


def learn_bpe(word_counts: dict[str, int], num_merges: int) -> MergeTable:
    """Learn up to ``num_merges`` merges from word-type counts.

    Each step merges the most frequent adjacent pair (count weighted by word
    frequency) everywhere. Ties break on the lexicographically smallest
    ``(left, right)``. Learning stops early once the best pair occurs fewer
    than two times. Pairs whose concatenation already exists as a symbol are
    passed over so every merge contributes exactly one new symbol.
    """
    return learn_bpe_with_state(word_counts, num_merges)[0]


def learn_bpe_with_state(word_counts: dict[str, int], num_merges: int):
    """Like :func:`learn_bpe`, also returning the learner's final segmentation."""
    if num_merges < 0:
        raise BPEError("num_merges must be >= 0")
    if not any(w and c > 0 for w, c in word_counts.items()):
        raise BPEError("empty corpus")
    learner = _Learner({w: c for w, c in word_counts.items() if w and c > 0})
    merges = []
    while len(merges) < num_merges:
        found = learner.best()
        if found is None or found[0] < 2:
            break
        merges.append(found[1])
        learner.merge(found[1])
    final = {"".join(s): list(s) for s in learner.words}
    return MergeTable(tuple(merges)), final


def segment(word: str, table: MergeTable, ranks=None) -> list[str]:
    """Marker-free symbols of ``word`` after applying the merges in rank order."""
    if ranks is None:
        ranks = table.ranks()
    syms = tuple(word)
    while len(syms) > 1:
        best = min(_pairs(syms), key=lambda p: ranks.get(p, len(ranks)))
        if best not in ranks:
            break
        syms = _merge_word(syms, best)
    return list(syms)


def apply_bpe(word: str, table: MergeTable, ranks=None) -> list[str]:
    """Segment one word; every symbol but the last carries the ``@@`` marker."""
    if not word:
        raise BPEError("cannot segment an empty word")
    syms = segment(word, table, ranks)
    return [s + MARKER for s in syms[:-1]] + [syms[-1]]


def restore(symbols: list[str]) -> list[str]:
    """Rejoin marked sub-word symbols into words."""
    words = []
    buf = []
    for s in symbols:
        if s.endswith(MARKER):
            buf.append(s[: -len(MARKER)])
        else:
            buf.append(s)
            words.append("".join(buf))
            buf = []
    if buf:
        raise BPEError(f"dangling {MARKER!r} continuation at end of sequence")
    return words


def subword_vocab_size(initial_vocab: int, num_merges: int) -> int:
    """Upper bound on the symbol vocabulary: initial alphabet plus one per merge."""
    if initial_vocab < 0 or num_merges < 0:
        raise BPEError("sizes must be non-negative")
    return initial_vocab + num_merges


def word_counts_from_transcripts(transcripts) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for t in transcripts:
        for w in t.split():
            counts[w] += 1
    return dict(counts)

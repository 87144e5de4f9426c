"""Character error rate with Mandarin-character / Latin-word tokens."""

from __future__ import annotations

from dataclasses import dataclass

from .text import split_units


@dataclass(frozen=True)
class ErrorCounts:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_length: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    def __add__(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_length + other.ref_length,
        )

    @property
    def cer(self) -> float:
        if self.ref_length == 0:
            raise ZeroDivisionError("empty reference")
        return 100.0 * self.errors / self.ref_length


def cer_tokenize(text: str) -> list[str]:
    """Each CJK ideograph is a token; each other non-space run is one token."""
    return split_units(text)


def edit_distance(ref, hyp) -> ErrorCounts:
    """Minimal substitution/insertion/deletion counts with unit costs.

    When several alignments tie, the backtrace prefers the diagonal
    (match or substitution), then insertion, then deletion.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]), row[j - 1] + 1, prev[j] + 1)
    s = ins = dele = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j and d[i][j] == d[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dele += 1
            i -= 1
    return ErrorCounts(s, ins, dele, n)


def _fold(tokens):
    return [t.lower() for t in tokens]


def score_pair(ref: str, hyp: str) -> ErrorCounts:
    """Edit counts between two texts; Latin tokens compare case-insensitively."""
    return edit_distance(_fold(cer_tokenize(ref)), _fold(cer_tokenize(hyp)))


def corpus_cer(pairs) -> float:
    """Pooled CER (%) over ``(ref, hyp)`` text pairs."""
    total = ErrorCounts()
    for ref, hyp in pairs:
        total = total + score_pair(ref, hyp)
    if total.ref_length == 0:
        raise ValueError("all references are empty")
    return total.cer


def write_report(path, rows, total: ErrorCounts) -> None:
    """rows: iterable of (utt_id, ErrorCounts)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"CER {total.cer:.2f} ({total.errors}/{total.ref_length})\n")
        f.write("utt_id\tS\tI\tD\tref_len\tcer\n")
        for uid, c in rows:
            cer = f"{c.cer:.2f}" if c.ref_length else "nan"
            f.write(f"{uid}\t{c.substitutions}\t{c.insertions}\t{c.deletions}\t{c.ref_length}\t{cer}\n")

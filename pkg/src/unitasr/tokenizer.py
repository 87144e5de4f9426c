"""Vocabularies and encoders for the five modeling units.

``character``, ``word`` and ``subword`` units need no lexicon. ``syllable``
and ``ci_phoneme`` units expand each word through a pronunciation lexicon,
always taking a word's first listed pronunciation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import bpe
from .text import join_units, split_units

PAD, UNK, BOS, EOS = "<PAD>", "<UNK>", "<S>", "</S>"
EXTRA_TOKENS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)

UNIT_KINDS = ("ci_phoneme", "syllable", "character", "subword", "word")
LEXICON_KINDS = ("ci_phoneme", "syllable")


class TokenizeError(ValueError):
    pass


class LexiconMiss(TokenizeError, KeyError):
    def __init__(self, word):
        super().__init__(f"word not in lexicon: {word!r}")
        self.word = word

    def __str__(self):
        return self.args[0]


@dataclass
class Lexicon:
    pronunciations: dict[str, list[list[str]]] = field(default_factory=dict)
    phonemes: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        for word, prons in self.pronunciations.items():
            for pron in prons:
                for syl in pron:
                    if syl not in self.phonemes:
                        raise TokenizeError(
                            f"syllable {syl!r} of word {word!r} has no phoneme expansion"
                        )

    @classmethod
    def load(cls, lexicon_path, syllable_path) -> "Lexicon":
        prons: dict[str, list[list[str]]] = {}
        for lineno, line in _tsv_lines(lexicon_path):
            if len(line) != 2 or not line[1].split():
                raise TokenizeError(f"{lexicon_path}:{lineno}: expected 'word<TAB>syl ...'")
            prons.setdefault(line[0], []).append(line[1].split())
        phones = {}
        for lineno, line in _tsv_lines(syllable_path):
            if len(line) != 2 or not line[1].split():
                raise TokenizeError(f"{syllable_path}:{lineno}: expected 'syllable<TAB>ph ...'")
            phones[line[0]] = line[1].split()
        return cls(prons, phones)

    def save(self, lexicon_path, syllable_path) -> None:
        with open(lexicon_path, "w", encoding="utf-8") as f:
            for word in sorted(self.pronunciations):
                for pron in self.pronunciations[word]:
                    f.write(f"{word}\t{' '.join(pron)}\n")
        with open(syllable_path, "w", encoding="utf-8") as f:
            for syl in sorted(self.phonemes):
                f.write(f"{syl}\t{' '.join(self.phonemes[syl])}\n")


def _tsv_lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if line.strip() and not line.startswith("#"):
                yield lineno, line.split("\t")


def expand_lexicon(word_seq, lex: Lexicon, level: str) -> list[str]:
    """Concatenate first-pronunciation expansions of ``word_seq``."""
    if level not in LEXICON_KINDS:
        raise TokenizeError(f"unknown lexicon level {level!r}")
    out: list[str] = []
    for word in word_seq:
        prons = lex.pronunciations.get(word)
        if not prons:
            raise LexiconMiss(word)
        if level == "syllable":
            out.extend(prons[0])
        else:
            for syl in prons[0]:
                out.extend(lex.phonemes[syl])
    return out


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    unit_kind: str

    def __post_init__(self):
        if self.unit_kind not in UNIT_KINDS:
            raise TokenizeError(f"unknown unit kind {self.unit_kind!r}")
        if tuple(self.tokens[:4]) != EXTRA_TOKENS:
            raise TokenizeError("vocabulary must start with <PAD> <UNK> <S> </S>")
        if len(set(self.tokens)) != len(self.tokens):
            raise TokenizeError("duplicate token in vocabulary")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path, unit_kind: str) -> "Vocabulary":
        tokens = Path(path).read_text(encoding="utf-8").split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        return cls(tuple(tokens), unit_kind)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    kind: str

    def __len__(self):
        return len(self.ids)


def segment(transcript: str, kind: str, aux=None) -> list[str]:
    """Split a normalized transcript into unit strings (no id lookup)."""
    if kind == "character":
        return split_units(transcript)
    if kind == "word":
        return transcript.split()
    if kind == "subword":
        if not isinstance(aux, bpe.MergeTable):
            raise TokenizeError("subword units need a MergeTable")
        ranks = aux.ranks()
        return [s for w in transcript.split() for s in bpe.apply_bpe(w, aux, ranks)]
    if kind in LEXICON_KINDS:
        if not isinstance(aux, Lexicon):
            raise TokenizeError(f"{kind} units need a Lexicon")
        return expand_lexicon(transcript.split(), aux, kind)
    raise TokenizeError(f"unknown unit kind {kind!r}")


def build_vocab(transcripts, kind: str, aux=None) -> Vocabulary:
    """Four extra tokens followed by the sorted distinct units of ``transcripts``.

    Sub-word vocabularies hold every symbol the merge table can produce over
    the training alphabet, each in marked (``x@@``) and final form.
    """
    units: set[str] = set()
    if kind == "subword":
        if not isinstance(aux, bpe.MergeTable):
            raise TokenizeError("subword units need a MergeTable")
        alphabet = {ch for t in transcripts for w in t.split() for ch in w}
        for sym in aux.symbols(alphabet):
            units.add(sym)
            units.add(sym + bpe.MARKER)
    else:
        for t in transcripts:
            units.update(segment(t, kind, aux))
    units -= set(EXTRA_TOKENS)
    return Vocabulary(EXTRA_TOKENS + tuple(sorted(units)), kind)


def encode(transcript: str, vocab: Vocabulary, aux=None) -> TokenSequence:
    """Ids for the units of ``transcript``; unknown units map to ``<UNK>``.

    Lexicon kinds raise :class:`LexiconMiss` for an unknown word.
    Sentence boundary tokens are not added.
    """
    return TokenSequence(tuple(vocab.id(u) for u in segment(transcript, vocab.unit_kind, aux)),
                         vocab.unit_kind)


def units_to_text(units: list[str], kind: str) -> str:
    if kind == "character":
        return join_units(units)
    if kind == "subword":
        return " ".join(bpe.restore(units))
    return " ".join(units)


def decode_ids(seq, vocab: Vocabulary) -> str:
    """Render ids back to text with the joining rule of the vocabulary's kind."""
    ids = seq.ids if isinstance(seq, TokenSequence) else tuple(seq)
    for i in ids:
        if not 0 <= i < len(vocab):
            raise TokenizeError(f"id {i} out of range for vocabulary of {len(vocab)}")
    return units_to_text([vocab.tokens[i] for i in ids], vocab.unit_kind)

"""Beam search, direct decoding, and the two-stage greedy cascade."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from . import bpe
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocabulary, decode_ids

log = logging.getLogger(__name__)

# never proposed as the next token
BLOCKED_IDS = (PAD_ID, UNK_ID, BOS_ID)


@dataclass(frozen=True)
class Hypothesis:
    ids: tuple[int, ...]
    log_prob: float
    finished: bool = False

    @property
    def length(self) -> int:
        return len(self.ids) - 1

    def score(self, length_norm: bool = False) -> float:
        if length_norm and self.length > 0:
            return self.log_prob / self.length
        return self.log_prob

    def units(self) -> tuple[int, ...]:
        """Ids without the leading <S> and a trailing </S>."""
        body = self.ids[1:]
        if self.finished and body and body[-1] == EOS_ID:
            body = body[:-1]
        return body


@dataclass
class DecodeConfig:
    beam_asr: int = 13
    beam_nmt: int = 6
    max_len_factor: float = 1.0
    nmt_max_len_factor: float = 2.0
    length_norm: bool = False

    def __post_init__(self):
        if self.beam_asr < 1 or self.beam_nmt < 1:
            raise ValueError("beam sizes must be >= 1")


def max_len_for(n: int, factor: float) -> int:
    return max(1, int(math.ceil(n * factor)))


def _step_log_probs(model, prefixes, enc):
    """log-softmax of the next-token distribution for each prefix (float64 numpy)."""
    b = len(prefixes)
    tgt = torch.tensor(prefixes, dtype=torch.long)
    states = enc.states.expand(b, -1, -1)
    mask = enc.mask.expand(b, -1)
    enc_b = type(enc)(states, mask)
    with torch.no_grad():
        logits = model.decode(tgt, enc_b)[:, -1]
    return torch.log_softmax(logits.double(), dim=-1).numpy()


def beam_search(model, src, beam: int, max_len: int, length_norm: bool = False):
    """Rank output sequences for one encoder input.

    ``src`` is an (n, dim) feature tensor or an (n,) id tensor. At every step
    all live hypotheses are extended by every allowed token and the best
    ``beam`` extensions survive; those ending in ``</S>`` retire to the
    finished pool. Without length normalization the search stops as soon as
    no live hypothesis can overtake the best finished one. Hypotheses still
    live after ``max_len`` tokens are returned unfinished. Ties are broken by
    token id, then by hypothesis rank.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    src = torch.as_tensor(src)
    if src.shape[0] == 0:
        raise ValueError("empty encoder input")
    model.eval()
    with torch.no_grad():
        enc = model.encode(src[None])
    live = [Hypothesis((BOS_ID,), 0.0)]
    done: list[Hypothesis] = []
    for t in range(max_len):
        logp = _step_log_probs(model, [h.ids for h in live], enc)
        v = logp.shape[1]
        allowed = np.ones(v, dtype=bool)
        allowed[[i for i in BLOCKED_IDS if i < v]] = False
        tok = np.tile(np.arange(v), len(live)).reshape(len(live), v)
        hyp = np.repeat(np.arange(len(live)), v).reshape(len(live), v)
        total = np.array([h.log_prob for h in live])[:, None] + logp
        key = total / (t + 1) if length_norm else total
        sel = np.broadcast_to(allowed, total.shape)
        cand_key, cand_tok, cand_hyp, cand_total = key[sel], tok[sel], hyp[sel], total[sel]
        order = np.lexsort((cand_hyp, cand_tok, -cand_key))[:beam]
        nxt = []
        for j in order:
            h = live[cand_hyp[j]]
            k = int(cand_tok[j])
            ext = Hypothesis(h.ids + (k,), float(cand_total[j]), k == EOS_ID)
            (done if ext.finished else nxt).append(ext)
        live = nxt
        if not live:
            break
        if t == max_len - 1:
            done.extend(live)
            break
        if not length_norm and done:
            best_done = max(h.log_prob for h in done)
            if best_done >= max(h.log_prob for h in live):
                break
    return sorted(done, key=lambda h: (-h.score(length_norm), h.ids))


def render(units, vocab: Vocabulary) -> str:
    """Text for decoded unit ids; a dangling sub-word marker is stripped."""
    units = list(units)
    if vocab.unit_kind == "subword":
        for i in units:
            if not 0 <= i < len(vocab):
                raise ValueError(f"id {i} out of range")
        toks = [vocab.tokens[i] for i in units]
        if toks and toks[-1].endswith(bpe.MARKER):
            toks[-1] = toks[-1][: -len(bpe.MARKER)]
        return " ".join(bpe.restore(toks))
    return decode_ids(units, vocab)


def _as_input(model, features):
    try:
        dtype = next(model.parameters()).dtype
    except (AttributeError, StopIteration):
        dtype = torch.float32
    return torch.as_tensor(features).to(dtype)


@dataclass
class DecodeResult:
    text: str
    log_prob: float
    units: tuple[int, ...]


def direct_decode(model, features, vocab: Vocabulary, cfg: DecodeConfig) -> DecodeResult:
    """Beam-search a lexicon-free model and render its best hypothesis."""
    if vocab.unit_kind not in ("word", "subword", "character"):
        raise ValueError(f"direct decoding needs word/subword/character units, got {vocab.unit_kind}")
    src = _as_input(model, features)
    hyps = beam_search(model, src, cfg.beam_asr, max_len_for(len(src), cfg.max_len_factor),
                       cfg.length_norm)
    best = hyps[0]
    return DecodeResult(render(best.units(), vocab), best.log_prob, best.units())


def cascade_decode(asr_model, nmt_model, features, out_vocab: Vocabulary,
                   cfg: DecodeConfig) -> DecodeResult:
    """Two greedy stages: best unit sequence from audio, then best text from units.

    Only the top ASR hypothesis is handed to the translation model. The
    returned log probability is the sum of the two stages' best scores.
    """
    src = _as_input(asr_model, features)
    stage1 = beam_search(asr_model, src, cfg.beam_asr,
                         max_len_for(len(src), cfg.max_len_factor), cfg.length_norm)[0]
    units = stage1.units()
    if not units:
        log.warning("ASR stage produced an empty unit sequence")
        return DecodeResult("", stage1.log_prob, ())
    nmt_src = torch.tensor(units, dtype=torch.long)
    stage2 = beam_search(nmt_model, nmt_src, cfg.beam_nmt,
                         max_len_for(len(units), cfg.nmt_max_len_factor), cfg.length_norm)[0]
    return DecodeResult(render(stage2.units(), out_vocab), stage1.log_prob + stage2.log_prob,
                        stage2.units())


def write_decodes(path, rows) -> None:
    """rows: iterable of (utt_id, text, log_prob)."""
    with open(path, "w", encoding="utf-8") as f:
        for uid, text, lp in rows:
            f.write(f"{uid}\t{text}\t{lp:.6f}\n")

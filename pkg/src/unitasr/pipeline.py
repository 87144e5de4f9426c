"""Glue between corpus files, features, vocabularies, training and decoding."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch

from . import bpe
from .data import Manifest, Utterance, load_manifest, write_manifest
from .decode import DecodeConfig, cascade_decode, direct_decode, write_decodes
from .features import (
    FeatureError, FrontendConfig, cmvn_by_speaker, compute_logmel, load_features,
    read_wav, save_features, speed_perturb, stack_downsample,
)
from .score import ErrorCounts, score_pair, write_report
from .tokenizer import LEXICON_KINDS, Lexicon, Vocabulary, encode
from .training import Example

log = logging.getLogger(__name__)

PERTURB_FACTORS = (0.9, 1.1)


def perturbed_manifest(manifest: Manifest) -> Manifest:
    """Original utterances plus ``@0.9`` / ``@1.1`` copies."""
    utts = list(manifest)
    for u in manifest:
        for f in PERTURB_FACTORS:
            utts.append(Utterance(f"{u.id}@{f}", u.audio_path, u.speaker_id, u.transcript))
    return Manifest(tuple(sorted(utts, key=lambda u: u.id)), manifest.split_tag)


def _speed_of(uid: str) -> tuple[str, float]:
    base, sep, tail = uid.rpartition("@")
    if sep:
        try:
            return base, float(tail)
        except ValueError:
            pass
    return uid, 1.0


def extract_features(manifest: Manifest, cfg: FrontendConfig, out_dir, speed_perturbation=False):
    """Compute log-Mel, per-speaker CMVN, then stack/downsample; cache to disk.

    Writes ``feats/<id>.fbk``, ``feats.scp`` and ``manifest.tsv`` (which
    includes the perturbed copies when requested). Returns the scp mapping.
    """
    out_dir = Path(out_dir)
    (out_dir / "feats").mkdir(parents=True, exist_ok=True)
    if speed_perturbation:
        manifest = perturbed_manifest(manifest)
    raw: dict[str, list] = {}
    order: dict[str, list[str]] = {}
    for u in manifest:
        _, factor = _speed_of(u.id)
        wav, rate = read_wav(u.audio_path)
        if rate != cfg.sample_rate_hz:
            raise FeatureError(f"{u.audio_path}: sample rate {rate} != configured {cfg.sample_rate_hz}")
        if factor != 1.0:
            wav = speed_perturb(wav, factor)
        raw.setdefault(u.speaker_id, []).append(compute_logmel(wav, cfg))
        order.setdefault(u.speaker_id, []).append(u.id)
    normed = cmvn_by_speaker(raw)
    scp = {}
    for spk, mats in normed.items():
        for uid, m in zip(order[spk], mats):
            stacked = stack_downsample(m, cfg.left_context, cfg.downsample)
            path = out_dir / "feats" / f"{uid}.fbk"
            save_features(path, stacked)
            scp[uid] = str(path.resolve())
    write_scp(out_dir / "feats.scp", scp)
    write_manifest(manifest, out_dir / "manifest.tsv")
    return scp


def write_scp(path, scp: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for uid in sorted(scp):
            f.write(f"{uid}\t{scp[uid]}\n")


def read_scp(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                uid, p = line.rstrip("\n").split("\t")
                out[uid] = p
    return out


def load_aux(kind: str, lexicon=None, syllables=None, merges=None):
    if kind in LEXICON_KINDS:
        if not (lexicon and syllables):
            raise ValueError(f"{kind} units need --lexicon and --syllables")
        return Lexicon.load(lexicon, syllables)
    if kind == "subword":
        if not merges:
            raise ValueError("subword units need --merges")
        return bpe.MergeTable.load(merges)
    return None


def speech_examples(manifest: Manifest, scp: dict[str, str], vocab: Vocabulary, aux=None):
    out = []
    for u in manifest:
        if u.id not in scp:
            raise KeyError(f"no features for {u.id}")
        feats = load_features(scp[u.id]).frames
        out.append(Example(u.id, feats, list(encode(u.transcript, vocab, aux).ids)))
    return out


def text_examples(manifest: Manifest, src_vocab: Vocabulary, src_aux, vocab: Vocabulary, aux=None):
    """Unit-to-text pairs for training the translation stage of the cascade."""
    out = []
    seen = set()
    for u in manifest:
        base, _ = _speed_of(u.id)
        if base in seen:
            continue
        seen.add(base)
        src = list(encode(u.transcript, src_vocab, src_aux).ids)
        out.append(Example(u.id, np.asarray(src, dtype=np.int64), list(encode(u.transcript, vocab, aux).ids)))
    return out


def decode_corpus(model, vocab: Vocabulary, manifest: Manifest, scp, cfg: DecodeConfig,
                  nmt_model=None, nmt_vocab=None):
    rows = []
    for u in manifest:
        feats = torch.from_numpy(load_features(scp[u.id]).frames)
        if nmt_model is not None:
            res = cascade_decode(model, nmt_model, feats, nmt_vocab, cfg)
        else:
            res = direct_decode(model, feats, vocab, cfg)
        rows.append((u.id, res.text, res.log_prob))
    return rows


def read_text_table(path) -> dict[str, str]:
    """Id -> text from a manifest (4+ fields) or an ``id<TAB>text[<TAB>...]`` file."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) >= 4:
                text = parts[3]
            elif len(parts) >= 2:
                text = parts[1]
            else:
                text = ""
            out[parts[0]] = text
    return out


def score_tables(ref: dict[str, str], hyp: dict[str, str]):
    rows = []
    total = ErrorCounts()
    for uid in sorted(ref):
        c = score_pair(ref[uid], hyp.get(uid, ""))
        rows.append((uid, c))
        total = total + c
    if total.ref_length == 0:
        raise ValueError("all references are empty")
    return rows, total


def score_files(ref_path, hyp_path, report_path=None):
    rows, total = score_tables(read_text_table(ref_path), read_text_table(hyp_path))
    if report_path:
        write_report(report_path, rows, total)
    return total


__all__ = [
    "extract_features", "perturbed_manifest", "read_scp", "write_scp", "load_aux",
    "speech_examples", "text_examples", "decode_corpus", "score_files", "read_text_table",
    "load_manifest", "write_decodes",
]

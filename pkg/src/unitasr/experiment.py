"""One experiment directory per (unit kind, model shape): vocab, checkpoints,
decodes and score, plus a cross-experiment CER table."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import torch

from . import bpe, config
from .checkpoint import load_model
from .data import load_manifest
from .decode import write_decodes
from .pipeline import (
    decode_corpus, extract_features, read_scp, score_files, speech_examples,
)
from .tokenizer import LEXICON_KINDS, build_vocab
from .training import train

log = logging.getLogger(__name__)

UNIT_LABELS = {
    "ci_phoneme": "CI-phonemes", "syllable": "Syllables", "word": "Words",
    "subword": "Sub-words", "character": "Characters",
}

# scaled-down D512-H8 shape that trains in minutes on one CPU core
TOY_CONFIG = {
    "N": "2", "d_model": "64", "h": "4", "d_k": "16", "d_v": "16", "d_ff": "256",
    "dropout_rate": "0.2", "warmup_steps": "150", "lr_scale": "1.0", "label_smoothing": "0.1",
    "clip_norm": "5.0", "batch_frames": "1600", "max_epochs": "40", "average_last": "10",
    "seed": "1", "beam_asr": "13", "beam_nmt": "6", "sample_rate_hz": "8000",
    "num_merges": "20", "speed_perturb": "true",
}


@dataclass
class ExperimentResult:
    unit_kind: str
    model_label: str
    cer: float
    exp_dir: Path
    seconds: float


def run_experiment(exp_dir, raw_cfg: dict, train_manifest, test_manifest, train_scp, test_scp,
                   lexicon=None, syllables=None, model_label="D64-H4") -> ExperimentResult:
    """Build vocab, train, average, decode the test set and score it."""
    t0 = time.time()
    exp_dir = Path(exp_dir)
    exp_dir.mkdir(parents=True, exist_ok=True)
    config.check_keys(raw_cfg)
    config.dump_config(exp_dir / "config.txt", raw_cfg)
    kind = raw_cfg.get("unit_kind", "character")
    if kind in LEXICON_KINDS:
        raise ValueError("lexicon units are decoded through the cascade; run them with the CLI")
    fcfg = config.frontend_config(raw_cfg)
    tcfg = config.train_config(raw_cfg)
    dcfg = config.decode_config(raw_cfg)
    train_m = load_manifest(train_manifest)
    test_m = load_manifest(test_manifest, "test")
    transcripts = [u.transcript for u in train_m]
    aux = None
    if kind == "subword":
        aux = bpe.learn_bpe(bpe.word_counts_from_transcripts(transcripts), int(raw_cfg.get("num_merges", 5000)))
        aux.save(exp_dir / "merges.txt")
    vocab = build_vocab(transcripts, kind, aux)
    vocab.save(exp_dir / "vocab.txt")
    examples = speech_examples(train_m, read_scp(train_scp), vocab, aux)
    mcfg = config.model_config(raw_cfg, input_kind="filterbank", input_dim=fcfg.stacked_dim,
                               tgt_vocab=len(vocab))
    result = train(examples, mcfg, tcfg, exp_dir, meta={"unit_kind": kind})
    model, _ = load_model(result.averaged)
    rows = decode_corpus(model, vocab, test_m, read_scp(test_scp), dcfg)
    write_decodes(exp_dir / "decode.tsv", rows)
    total = score_files(test_manifest, exp_dir / "decode.tsv", exp_dir / "score.txt")
    return ExperimentResult(kind, model_label, total.cer, exp_dir, time.time() - t0)


def comparison_table(results) -> str:
    lines = ["| Modeling units | Model | CER (%) |", "|---|---|---|"]
    for r in results:
        lines.append(f"| {UNIT_LABELS.get(r.unit_kind, r.unit_kind)} | {r.model_label} | {r.cer:.2f} |")
    return "\n".join(lines) + "\n"


def read_results(exp_dirs):
    out = []
    for d in map(Path, exp_dirs):
        raw = config.load_config(d / "config.txt")
        first = (d / "score.txt").read_text(encoding="utf-8").splitlines()[0]
        cer = float(first.split()[1])
        if "d_model" in raw or "preset" not in raw:
            label = f"D{raw.get('d_model', '?')}-H{raw.get('h', '?')}"
        else:
            label = raw["preset"]
        out.append(ExperimentResult(raw.get("unit_kind", "?"), label, cer, d, 0.0))
    return out


def run_toy_comparison(work_dir, seed: int = 1, kinds=("character", "word"), overrides=None,
                       n_train: int = 200, n_test: int = 20):
    """Toy corpus -> features -> one experiment per unit kind -> report.md."""
    from .toy import generate

    torch.set_num_threads(1)
    work = Path(work_dir)
    paths = generate(work / "corpus", seed=seed, n_train=n_train, n_test=n_test)
    raw = dict(TOY_CONFIG)
    raw.update(overrides or {})
    fcfg = config.frontend_config(raw)
    perturb = raw.get("speed_perturb", "false").lower() in ("1", "true", "yes")
    extract_features(load_manifest(paths["train"]), fcfg, work / "feats_train", perturb)
    extract_features(load_manifest(paths["test"], "test"), fcfg, work / "feats_test")
    results = []
    for kind in kinds:
        cfg = dict(raw, unit_kind=kind)
        res = run_experiment(work / f"exp_{kind}", cfg, work / "feats_train" / "manifest.tsv", paths["test"],
                             work / "feats_train" / "feats.scp", work / "feats_test" / "feats.scp")
        log.info("%s: CER %.2f%% in %.0fs", kind, res.cer, res.seconds)
        results.append(res)
    (work / "report.md").write_text(comparison_table(results), encoding="utf-8")
    return results

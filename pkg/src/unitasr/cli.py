"""Command-line entry point: ``unitasr <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from . import bpe, config
from .checkpoint import average_checkpoints, load_model, save_checkpoint
from .data import load_manifest
from .decode import write_decodes
from .experiment import comparison_table, read_results
from .pipeline import (
    decode_corpus, extract_features, load_aux, read_scp, score_files, speech_examples,
    text_examples,
)
from .tokenizer import UNIT_KINDS, Vocabulary, build_vocab
from .training import train

log = logging.getLogger("unitasr")


def _settings(args) -> dict[str, str]:
    raw = config.load_config(args.config) if getattr(args, "config", None) else {}
    raw.update(config.parse_overrides(getattr(args, "set", None)))
    config.check_keys(raw)
    return raw


def _add_config_args(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def _add_aux_args(p):
    p.add_argument("--lexicon", help="word<TAB>syllables lexicon (syllable/ci_phoneme units)")
    p.add_argument("--syllables", help="syllable<TAB>phonemes table (syllable/ci_phoneme units)")
    p.add_argument("--merges", help="BPE merges file (subword units)")


def _transcripts(args):
    if args.manifest:
        return [u.transcript for u in load_manifest(args.manifest)]
    from .data import normalize_transcript
    lines = Path(args.text).read_text(encoding="utf-8").splitlines()
    return [t for t in (normalize_transcript(l) for l in lines) if t]


def cmd_toy_corpus(args):
    from .toy import generate
    paths = generate(args.out, seed=args.seed, n_train=args.n_train, n_test=args.n_test)
    for k, v in paths.items():
        print(f"{k}\t{v}")


def cmd_prepare(args):
    raw = _settings(args)
    perturb = args.speed_perturb or raw.get("speed_perturb", "false").lower() in ("1", "true", "yes")
    scp = extract_features(load_manifest(args.manifest), config.frontend_config(raw), args.out, perturb)
    print(f"wrote features for {len(scp)} utterances to {args.out}")


def cmd_build_vocab(args):
    aux = load_aux(args.kind, args.lexicon, args.syllables, args.merges)
    vocab = build_vocab(_transcripts(args), args.kind, aux)
    vocab.save(args.out)
    print(f"{len(vocab)} tokens -> {args.out}")


def cmd_learn_bpe(args):
    table = bpe.learn_bpe(bpe.word_counts_from_transcripts(_transcripts(args)), args.num_merges)
    table.save(args.out)
    print(f"{table.num_merges} merges -> {args.out}")


def cmd_train(args):
    raw = _settings(args)
    torch.set_num_threads(args.threads)
    manifest = load_manifest(args.manifest)
    vocab = Vocabulary.load(args.vocab, args.kind)
    aux = load_aux(args.kind, args.lexicon, args.syllables, args.merges)
    fixed = {"tgt_vocab": len(vocab)}
    if args.source_kind:
        src_vocab = Vocabulary.load(args.source_vocab, args.source_kind)
        src_aux = load_aux(args.source_kind, args.lexicon, args.syllables, args.merges)
        examples = text_examples(manifest, src_vocab, src_aux, vocab, aux)
        fixed.update(input_kind="token", src_vocab=len(src_vocab))
    else:
        if not args.feats:
            raise SystemExit("train: --feats is required for speech models")
        examples = speech_examples(manifest, read_scp(args.feats), vocab, aux)
        fixed.update(input_kind="filterbank", input_dim=examples[0].src.shape[1])
    mcfg = config.model_config(raw, **fixed)
    exp = Path(args.exp)
    exp.mkdir(parents=True, exist_ok=True)
    config.dump_config(exp / "config.txt", {**raw, "unit_kind": args.kind})
    res = train(examples, mcfg, config.train_config(raw), exp, meta={"unit_kind": args.kind})
    print(f"{len(res.checkpoints)} checkpoints, final epoch loss {res.epoch_losses[-1]:.4f}, "
          f"averaged model -> {res.averaged}")


def cmd_average(args):
    if args.inputs:
        paths = args.inputs
    else:
        paths = sorted((Path(args.exp) / "checkpoints").glob("ckpt-*.ckpt"))
        if not paths:
            raise SystemExit(f"average: no checkpoints under {args.exp}")
        paths = paths[-args.last:]
    cfg, params, meta = average_checkpoints(paths)
    save_checkpoint(args.out, cfg, params, {**meta, "averaged": len(paths)})
    print(f"averaged {len(paths)} checkpoints -> {args.out}")


def cmd_decode(args):
    raw = _settings(args)
    dcfg = config.decode_config(raw)
    if args.beam:
        dcfg.beam_asr = args.beam
    if args.nmt_beam:
        dcfg.beam_nmt = args.nmt_beam
    model, meta = load_model(args.model)
    kind = args.kind or meta.get("unit_kind", "character")
    vocab = Vocabulary.load(args.vocab, kind)
    nmt_model = nmt_vocab = None
    if args.nmt_model:
        nmt_model, nmeta = load_model(args.nmt_model)
        nmt_vocab = Vocabulary.load(args.nmt_vocab, args.nmt_kind or nmeta.get("unit_kind", "character"))
    rows = decode_corpus(model, vocab, load_manifest(args.manifest, "test"), read_scp(args.feats),
                         dcfg, nmt_model, nmt_vocab)
    write_decodes(args.out, rows)
    print(f"decoded {len(rows)} utterances -> {args.out}")


def cmd_score(args):
    total = score_files(args.ref, args.hyp, args.out)
    print(f"CER {total.cer:.2f} ({total.errors}/{total.ref_length})")


def cmd_report(args):
    text = comparison_table(read_results(args.exp))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unitasr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-corpus", help="generate the synthetic tone corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=20)
    p.set_defaults(func=cmd_toy_corpus)

    p = sub.add_parser("prepare", help="validate a manifest and cache stacked features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--speed-perturb", action="store_true", help="add 0.9x and 1.1x copies")
    _add_config_args(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("build-vocab", help="build a vocabulary for one unit kind")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--text", help="one transcript per line")
    p.add_argument("--kind", required=True, choices=UNIT_KINDS)
    p.add_argument("--out", required=True)
    _add_aux_args(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("learn-bpe", help="learn BPE merges from transcripts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--text", help="one transcript per line")
    p.add_argument("--num-merges", type=int, default=5000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_bpe)

    p = sub.add_parser("train", help="train a speech or unit-to-text model")
    p.add_argument("--exp", required=True, help="experiment directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feats", help="feats.scp from prepare (speech models)")
    p.add_argument("--vocab", required=True, help="target vocabulary")
    p.add_argument("--kind", required=True, choices=UNIT_KINDS)
    p.add_argument("--source-kind", choices=UNIT_KINDS,
                   help="train a token-input translation model from these units")
    p.add_argument("--source-vocab", help="source vocabulary for --source-kind")
    p.add_argument("--threads", type=int, default=1)
    _add_aux_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("average", help="average the last K checkpoints")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--exp", help="experiment directory holding checkpoints/")
    g.add_argument("--inputs", nargs="+", help="explicit checkpoint files")
    p.add_argument("--last", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("decode", help="beam-search decode a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--kind", choices=UNIT_KINDS)
    p.add_argument("--manifest", required=True)
    p.add_argument("--feats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, help="ASR beam size (default from config, 13)")
    p.add_argument("--nmt-model", help="translation model: enables cascade decoding")
    p.add_argument("--nmt-vocab", help="output vocabulary of the translation model")
    p.add_argument("--nmt-kind", choices=UNIT_KINDS)
    p.add_argument("--nmt-beam", type=int, help="translation beam size (default 6)")
    _add_config_args(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", help="pooled CER of hypotheses against references")
    p.add_argument("--ref", required=True, help="manifest or id<TAB>text file")
    p.add_argument("--hyp", required=True, help="decode output or id<TAB>text file")
    p.add_argument("--out", help="write the per-utterance report here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="CER table over experiment directories")
    p.add_argument("--exp", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "out", None):
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except SystemExit as e:
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return 2
        return int(e.code or 0)
    except (ValueError, KeyError, OSError) as e:
        print(f"unitasr {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

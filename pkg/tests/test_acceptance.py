"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line, shown in the terminal summary and
printed to stdout (visible with ``pytest -s``).
"""

import itertools
import math
import random
import sys
import time
from collections import OrderedDict
from functools import lru_cache

import torch

from conftest import ACCEPTANCE
from helpers import tiny_model
from oracles import brute_force_bpe, exhaustive_best
from unitasr.bpe import (
    apply_bpe, learn_bpe, learn_bpe_with_state, restore, segment, word_counts_from_transcripts,
)
from unitasr.checkpoint import average_checkpoints, save_checkpoint
from unitasr.decode import DecodeConfig, beam_search, cascade_decode
from unitasr.score import corpus_cer, edit_distance
from unitasr.tokenizer import BOS_ID, EOS_ID, EXTRA_TOKENS, Vocabulary, build_vocab, encode
from unitasr.toy import toy_lexicon
from unitasr.training import Example, collate, label_smoothed_loss, lr_schedule


def record(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE.append(line)
    print(line, file=sys.stdout)
    assert ok, line


# 1 -------------------------------------------------------------------------

def test_1_gradient_oracle():
    t0 = time.time()
    model = tiny_model(7, tgt_vocab=11)
    g = torch.Generator().manual_seed(1)
    batch = [Example("a", torch.randn(5, 6, generator=g, dtype=torch.float64), (4, 5, 9, 10)),
             Example("b", torch.randn(3, 6, generator=g, dtype=torch.float64), (6, 7))]
    src, lens, tgt_in, tgt_out = collate(batch, "filterbank", torch.float64)
    params = OrderedDict(model.named_parameters())

    def loss():
        logits = model(src, lens, tgt_in)
        return label_smoothed_loss(logits.reshape(-1, 11), tgt_out.reshape(-1), 0.1)

    model.zero_grad()
    loss().backward()
    h = 1e-6
    worst, vanishing = 0.0, []
    with torch.no_grad():
        for name, p in params.items():
            num = torch.zeros_like(p)
            flat, nflat = p.view(-1), num.view(-1)
            for i in range(flat.numel()):
                keep = flat[i].item()
                flat[i] = keep + h
                up = loss().item()
                flat[i] = keep - h
                dn = loss().item()
                flat[i] = keep
                nflat[i] = (up - dn) / (2 * h)
            ana = p.grad
            scale = (ana.norm() + num.norm()).item()
            if scale < 1e-7:
                # the true gradient is exactly zero (e.g. key biases); both sides are noise
                vanishing.append(name)
                assert (ana - num).abs().max().item() < 1e-7, name
                continue
            worst = max(worst, (ana - num).norm().item() / scale)
    secs = time.time() - t0
    record(1, worst <= 1e-4 and secs < 60,
           f"max relative gradient error {worst:.2e} over {len(params)} tensors "
           f"({len(vanishing)} with identically zero gradient) in {secs:.1f}s")


# 2 -------------------------------------------------------------------------

def test_2_causality_and_padding():
    worst_causal, effective = 0.0, 0
    for case in range(100):
        g = torch.Generator().manual_seed(case)
        model = tiny_model(case % 10)
        m = int(torch.randint(2, 9, (1,), generator=g))
        j = int(torch.randint(1, m, (1,), generator=g))
        src = torch.randn(1, int(torch.randint(1, 7, (1,), generator=g)), 6, generator=g, dtype=torch.float64)
        tgt = torch.randint(0, 11, (1, m), generator=g)
        alt = tgt.clone()
        alt[0, j] = (tgt[0, j] + 1 + torch.randint(0, 10, (1,), generator=g)) % 11
        with torch.no_grad():
            enc = model.encode(src)
            a = model.decode(tgt, enc)[0]
            b = model.decode(alt, enc)[0]
        worst_causal = max(worst_causal, (a[:j] - b[:j]).abs().max().item())
        effective += bool((a[j:] - b[j:]).abs().max() > 1e-6)
    worst_pad = 0.0
    for case in range(20):
        g = torch.Generator().manual_seed(1000 + case)
        model = tiny_model(case)
        n = int(torch.randint(1, 7, (1,), generator=g))
        extra = int(torch.randint(1, 6, (1,), generator=g))
        src = torch.randn(1, n, 6, generator=g, dtype=torch.float64)
        padded = torch.cat([src, 50 * torch.randn(1, extra, 6, generator=g, dtype=torch.float64)], 1)
        tgt = torch.randint(0, 11, (1, 4), generator=g)
        with torch.no_grad():
            e1 = model.encode(src)
            e2 = model.encode(padded, torch.tensor([n]))
            d1 = model.decode(tgt, e1)
            d2 = model.decode(tgt, e2)
        worst_pad = max(worst_pad, (e1.states - e2.states[:, :n]).abs().max().item(),
                        (d1 - d2).abs().max().item())
    record(2, worst_causal <= 1e-6 and worst_pad <= 1e-5 and effective == 100,
           f"100 causality cases max change {worst_causal:.1e} "
           f"(later positions moved in {effective}/100); padding invariance max change {worst_pad:.1e}")


# 3 -------------------------------------------------------------------------

def random_corpus(rnd):
    alphabet = "abcde"[: rnd.randint(2, 5)]
    words = {"".join(rnd.choice(alphabet) for _ in range(rnd.randint(1, 7))) for _ in range(rnd.randint(1, 20))}
    return {w: rnd.randint(1, 9) for w in words}


def test_3_bpe_oracle():
    t0 = time.time()
    problems = []
    for case in range(50):
        rnd = random.Random(case)
        counts = random_corpus(rnd)
        n = rnd.randint(0, 30)
        table, final = learn_bpe_with_state(counts, n)
        ref_merges, ref_words = brute_force_bpe(counts, n)
        if list(table.merges) != ref_merges:
            problems.append(f"corpus {case}: merges differ from brute force")
        alphabet = {c for w in counts for c in w}
        for w in counts:
            if segment(w, table) != list(final[w]) or list(final[w]) != ref_words[w]:
                problems.append(f"corpus {case}: learner/applier disagree on {w!r}")
            if restore(apply_bpe(w, table)) != [w]:
                problems.append(f"corpus {case}: restore fails on {w!r}")
        symbols = alphabet | {a + b for a, b in table.merges}
        if len(alphabet) + table.num_merges != len(symbols) or table.symbols(alphabet) != symbols:
            problems.append(f"corpus {case}: vocabulary-size identity fails")
    secs = time.time() - t0
    record(3, not problems and secs < 60,
           f"50 corpora, {len(problems)} violations in {secs:.1f}s" + (f": {problems[:3]}" if problems else ""))


# 4 -------------------------------------------------------------------------

def symbol_vocab(kind, units):
    return Vocabulary(tuple(EXTRA_TOKENS) + tuple(units), kind)


def test_4_beam_and_cascade_oracle():
    beam_bad = []
    for case in range(100):
        g = torch.Generator().manual_seed(case)
        n_real = int(torch.randint(1, 5, (1,), generator=g))
        max_len = int(torch.randint(1, 5, (1,), generator=g))
        model = tiny_model(case, tgt_vocab=4 + n_real)
        src = torch.randn(int(torch.randint(1, 5, (1,), generator=g)), 6, generator=g, dtype=torch.float64)
        outputs = list(range(4, 4 + n_real)) + [EOS_ID]
        best = exhaustive_best(model, src, outputs, max_len)
        hyp = beam_search(model, src, len(outputs) ** max_len, max_len)[0]
        if hyp.ids != (BOS_ID, *best):
            beam_bad.append(case)
    cascade_bad = []
    for case in range(20):
        g = torch.Generator().manual_seed(500 + case)
        n_units = int(torch.randint(1, 4, (1,), generator=g))
        n_chars = int(torch.randint(1, 4, (1,), generator=g))
        asr = tiny_model(case, tgt_vocab=4 + n_units)
        nmt = tiny_model(case + 100, input_kind="token", src_vocab=4 + n_units, tgt_vocab=4 + n_chars)
        src = torch.randn(int(torch.randint(1, 4, (1,), generator=g)), 6, generator=g, dtype=torch.float64)
        out_vocab = symbol_vocab("character", [chr(0x4E00 + i) for i in range(n_chars)])
        len1 = len(src)
        s = exhaustive_best(asr, src, list(range(4, 4 + n_units)) + [EOS_ID], len1)
        s = tuple(t for t in s if t != EOS_ID)
        if s:
            len2 = 2 * len(s)
            w = exhaustive_best(nmt, torch.tensor(s), list(range(4, 4 + n_chars)) + [EOS_ID], len2)
            expected = "".join(out_vocab.tokens[t] for t in w if t != EOS_ID)
        else:
            len2, expected = 1, ""
        cfg = DecodeConfig(beam_asr=(n_units + 1) ** len1, beam_nmt=(n_chars + 1) ** max(len2, 1),
                           max_len_factor=1.0, nmt_max_len_factor=2.0)
        if cascade_decode(asr, nmt, src, out_vocab, cfg).text != expected:
            cascade_bad.append(case)
    record(4, not beam_bad and not cascade_bad,
           f"full beam matches exhaustive argmax on {100 - len(beam_bad)}/100 models; "
           f"cascade matches two-stage enumeration on {20 - len(cascade_bad)}/20")


# 5 -------------------------------------------------------------------------

@lru_cache(maxsize=None)
def brute(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(brute(a[1:], b[1:]) + (a[0] != b[0]), brute(a[1:], b) + 1, brute(a, b[1:]) + 1)


def test_5_edit_distance_oracle():
    lists = [t for n in range(7) for t in itertools.product("abc", repeat=n)]
    mismatches = 0
    for a in lists:
        for b in lists:
            if edit_distance(a, b).errors != brute(a, b):
                mismatches += 1
    brute.cache_clear()
    cer = corpus_cer([("一种信念", "一种信心")])
    record(5, mismatches == 0 and cer == 25.0,
           f"{len(lists) ** 2} pairs, {mismatches} mismatches; one substitution over four tokens gives CER {cer}")


# 6 -------------------------------------------------------------------------

def test_6_schedule():
    got = lr_schedule(4000, 512, 4000)
    want = math.pow(512, -0.5) * math.pow(4000, -0.5)
    ups = [lr_schedule(s, 512, 4000) for s in range(1, 4001)]
    downs = [lr_schedule(s, 512, 4000) for s in range(4000, 40001)]
    shape = all(x < y for x, y in zip(ups, ups[1:])) and all(x > y for x, y in zip(downs, downs[1:]))
    record(6, abs(got - want) <= 1e-9 and shape,
           f"peak {got:.12g} vs {want:.12g}; strictly rising to step 4000 then falling: {shape}")


# 7 -------------------------------------------------------------------------

def test_7_toy_end_to_end(tmp_path):
    from unitasr.experiment import run_toy_comparison

    t0 = time.time()
    results = run_toy_comparison(tmp_path, seed=1, kinds=("character", "word"))
    secs = time.time() - t0
    by_kind = {r.unit_kind: r for r in results}
    report = (tmp_path / "report.md").read_text(encoding="utf-8")
    table_ok = report.startswith("| Modeling units | Model | CER (%) |") and \
        "| Characters |" in report and "| Words |" in report
    cer = by_kind["character"].cer
    record(7, cer <= 10.0 and set(by_kind) == {"character", "word"} and table_ok and secs < 1800,
           f"character CER {cer:.2f}%, word CER {by_kind['word'].cer:.2f}%, report written, {secs:.0f}s")


# 8 -------------------------------------------------------------------------

def test_8_checkpoint_averaging(tmp_path):
    model = tiny_model(3, dtype=torch.float32)
    params = OrderedDict((k, v.detach()) for k, v in model.named_parameters())
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, model.cfg, params, {})
    paths = []
    for k in range(5):
        dst = tmp_path / f"copy{k}.ckpt"
        dst.write_bytes(path.read_bytes())
        paths.append(dst)
    _, avg, _ = average_checkpoints(paths)
    identical = all(torch.equal(avg[k].float(), params[k]) for k in params)
    for name, fill in (("zero.ckpt", 0.0), ("two.ckpt", 2.0)):
        save_checkpoint(tmp_path / name, model.cfg,
                        OrderedDict((k, torch.full_like(v, fill)) for k, v in params.items()), {})
    _, mid, _ = average_checkpoints([tmp_path / "zero.ckpt", tmp_path / "two.ckpt"])
    ones = all(torch.all(v == 1.0) for v in mid.values())
    record(8, identical and ones, f"5 identical copies reproduce the input exactly: {identical}; "
                                  f"mean of 0 and 2 is 1: {ones}")


# 9 -------------------------------------------------------------------------

SEGMENTATIONS = {
    "ci_phoneme": "Y IY1 JH UH3 NG3 X IY4 N4 N IY4 AE4 N4",
    "syllable": "YI1 ZHONG3 XIN4 NIAN4",
    "character": "一 种 信 念",
    "subword": "一种 信@@ 念",
    "word": "一种 信念",
}


def test_9_example_sentence_segmentations():
    sent = "一种 信念"
    lex = toy_lexicon()
    # a second "一种" in the learning text makes that the only pair seen twice
    merges = learn_bpe(word_counts_from_transcripts([sent, "一种"]), 10)
    aux = {"ci_phoneme": lex, "syllable": lex, "subword": merges}
    got = {}
    for kind in SEGMENTATIONS:
        vocab = build_vocab([sent], kind, aux.get(kind))
        got[kind] = " ".join(vocab.tokens[i] for i in encode(sent, vocab, aux.get(kind)).ids)
    bad = [k for k in SEGMENTATIONS if got[k] != SEGMENTATIONS[k]]
    record(9, not bad, "all five unit kinds reproduced verbatim" if not bad else f"mismatch: {bad} {got}")

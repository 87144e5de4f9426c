import pytest
import torch

from unitasr.checkpoint import load_checkpoint
from unitasr.cli import main

TINY = ["N=1", "d_model=16", "h=2", "d_k=8", "d_v=8", "d_ff=32", "max_epochs=2",
        "warmup_steps=5", "batch_frames=400", "average_last=2", "beam_asr=2", "beam_nmt=2"]


def sets(items):
    out = []
    for kv in items:
        out += ["--set", kv]
    return out


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    assert main(["toy-corpus", "--out", str(d / "corpus"), "--seed", "3",
                 "--n-train", "8", "--n-test", "3"]) == 0
    assert main(["prepare", "--manifest", str(d / "corpus" / "train.tsv"),
                 "--out", str(d / "ftrain"), "--speed-perturb"]) == 0
    assert main(["prepare", "--manifest", str(d / "corpus" / "test.tsv"), "--out", str(d / "ftest")]) == 0
    return d


def test_help_lists_subcommands(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for cmd in ("prepare", "build-vocab", "learn-bpe", "train", "average", "decode", "score", "toy-corpus"):
        assert cmd in out


def test_unknown_subcommand():
    assert main(["frobnicate"]) != 0


def test_unknown_config_key(tmp_path, capsys):
    (tmp_path / "m.tsv").write_text("u\tx.wav\ts\t好\n", encoding="utf-8")
    rc = main(["prepare", "--manifest", str(tmp_path / "m.tsv"), "--out", str(tmp_path / "o"),
               "--set", "bogus=1"])
    assert rc != 0 and "bogus" in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    (tmp_path / "c.txt").write_text("this is not a pair\n")
    (tmp_path / "m.tsv").write_text("u\tx.wav\ts\t好\n", encoding="utf-8")
    assert main(["prepare", "--manifest", str(tmp_path / "m.tsv"), "--out", str(tmp_path / "o"),
                 "--config", str(tmp_path / "c.txt")]) != 0


def test_score_identical(tmp_path, capsys):
    f = tmp_path / "h.tsv"
    f.write_text("u1\t一种信念\t-1.0\nu2\tOK 好\t-2.0\n", encoding="utf-8")
    assert main(["score", "--ref", str(f), "--hyp", str(f), "--out", str(tmp_path / "r.txt")]) == 0
    assert "CER 0.00" in capsys.readouterr().out
    report = (tmp_path / "r.txt").read_text(encoding="utf-8").splitlines()
    assert report[0].startswith("CER 0.00")
    assert report[1].split("\t") == ["utt_id", "S", "I", "D", "ref_len", "cer"]


def test_build_vocab_example_sentence(tmp_path):
    (tmp_path / "t.txt").write_text("一种 信念\n", encoding="utf-8")
    out = tmp_path / "v.txt"
    assert main(["build-vocab", "--text", str(tmp_path / "t.txt"), "--kind", "character", "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8").splitlines() == ["<PAD>", "<UNK>", "<S>", "</S>"] + sorted("一种信念")


def test_build_vocab_lexicon_kind_needs_lexicon(tmp_path):
    (tmp_path / "t.txt").write_text("一种 信念\n", encoding="utf-8")
    assert main(["build-vocab", "--text", str(tmp_path / "t.txt"), "--kind", "syllable",
                 "--out", str(tmp_path / "v.txt")]) != 0


def test_toy_corpus_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["toy-corpus", "--out", str(tmp_path / name), "--seed", "5", "--n-train", "3", "--n-test", "1"])
    for rel in ("train.tsv", "test.tsv", "lexicon.txt", "wav/train-0002.wav"):
        a = (tmp_path / "a" / rel).read_bytes()
        b = (tmp_path / "b" / rel).read_bytes()
        if rel.endswith(".tsv"):
            a, b = a.replace(b"/a/", b"/x/"), b.replace(b"/b/", b"/x/")
        assert a == b


def test_prepare_outputs(corpus):
    manifest = (corpus / "ftrain" / "manifest.tsv").read_text(encoding="utf-8").splitlines()
    assert len(manifest) == 24
    assert any("@0.9\t" in l for l in manifest) and any("@1.1\t" in l for l in manifest)
    scp = (corpus / "ftrain" / "feats.scp").read_text().splitlines()
    assert len(scp) == 24


def test_full_direct_flow(corpus, tmp_path, capsys):
    c = corpus
    vocab = tmp_path / "vocab.txt"
    merges = tmp_path / "merges.txt"
    assert main(["learn-bpe", "--manifest", str(c / "corpus" / "train.tsv"), "--num-merges", "10",
                 "--out", str(merges)]) == 0
    assert main(["build-vocab", "--manifest", str(c / "corpus" / "train.tsv"), "--kind", "subword",
                 "--merges", str(merges), "--out", str(vocab)]) == 0
    exp = tmp_path / "exp"
    assert main(["train", "--exp", str(exp), "--manifest", str(c / "ftrain" / "manifest.tsv"),
                 "--feats", str(c / "ftrain" / "feats.scp"), "--vocab", str(vocab), "--kind", "subword",
                 "--merges", str(merges)] + sets(TINY)) == 0
    ckpts = sorted((exp / "checkpoints").glob("*.ckpt"))
    assert len(ckpts) == 2
    avg = tmp_path / "avg1.ckpt"
    assert main(["average", "--exp", str(exp), "--last", "1", "--out", str(avg)]) == 0
    _, a, _ = load_checkpoint(avg)
    _, b, _ = load_checkpoint(ckpts[-1])
    assert all(torch.equal(a[k], b[k]) for k in b)
    hyp = tmp_path / "hyp.tsv"
    assert main(["decode", "--model", str(exp / "model.ckpt"), "--vocab", str(vocab),
                 "--manifest", str(c / "corpus" / "test.tsv"), "--feats", str(c / "ftest" / "feats.scp"),
                 "--out", str(hyp), "--beam", "3"]) == 0
    rows = [l.split("\t") for l in hyp.read_text(encoding="utf-8").splitlines()]
    assert len(rows) == 3 and all(len(r) == 3 for r in rows)
    capsys.readouterr()
    assert main(["score", "--ref", str(c / "corpus" / "test.tsv"), "--hyp", str(hyp)]) == 0
    assert capsys.readouterr().out.startswith("CER ")


def test_cascade_flow(corpus, tmp_path):
    c = corpus
    lex = ["--lexicon", str(c / "corpus" / "lexicon.txt"), "--syllables", str(c / "corpus" / "syllables.txt")]
    train_m = str(c / "ftrain" / "manifest.tsv")
    syl, char = tmp_path / "syl.txt", tmp_path / "char.txt"
    assert main(["build-vocab", "--manifest", train_m, "--kind", "syllable", "--out", str(syl)] + lex) == 0
    assert main(["build-vocab", "--manifest", train_m, "--kind", "character", "--out", str(char)]) == 0
    assert main(["train", "--exp", str(tmp_path / "asr"), "--manifest", train_m,
                 "--feats", str(c / "ftrain" / "feats.scp"), "--vocab", str(syl), "--kind", "syllable"]
                + lex + sets(TINY)) == 0
    assert main(["train", "--exp", str(tmp_path / "nmt"), "--manifest", train_m, "--vocab", str(char),
                 "--kind", "character", "--source-kind", "syllable", "--source-vocab", str(syl)]
                + lex + sets(TINY)) == 0
    hyp = tmp_path / "hyp.tsv"
    assert main(["decode", "--model", str(tmp_path / "asr" / "model.ckpt"), "--vocab", str(syl),
                 "--manifest", str(c / "corpus" / "test.tsv"), "--feats", str(c / "ftest" / "feats.scp"),
                 "--nmt-model", str(tmp_path / "nmt" / "model.ckpt"), "--nmt-vocab", str(char),
                 "--out", str(hyp)] + sets(TINY)) == 0
    assert len(hyp.read_text(encoding="utf-8").splitlines()) == 3


def test_train_reproducible(corpus, tmp_path):
    c = corpus
    vocab = tmp_path / "v.txt"
    main(["build-vocab", "--manifest", str(c / "corpus" / "train.tsv"), "--kind", "word", "--out", str(vocab)])
    for name in ("a", "b"):
        assert main(["train", "--exp", str(tmp_path / name), "--manifest", str(c / "corpus" / "train.tsv"),
                     "--feats", str(c / "ftrain" / "feats.scp"), "--vocab", str(vocab), "--kind", "word"]
                    + sets(TINY)) == 0
    assert (tmp_path / "a" / "train.log").read_bytes() == (tmp_path / "b" / "train.log").read_bytes()
    assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()


def test_report(tmp_path, capsys):
    for kind, cer in (("character", "3.00"), ("word", "5.50")):
        d = tmp_path / kind
        d.mkdir()
        (d / "config.txt").write_text(f"unit_kind = {kind}\nd_model = 64\nh = 4\n")
        (d / "score.txt").write_text(f"CER {cer} (3/100)\n")
    assert main(["report", "--exp", str(tmp_path / "character"), str(tmp_path / "word")]) == 0
    out = capsys.readouterr().out
    assert "| Characters | D64-H4 | 3.00 |" in out and "| Words | D64-H4 | 5.50 |" in out

"""Deterministic synthetic corpus: words rendered as fixed tone patterns.

Every character (and each half of the Latin word ``OK``) owns a two-tone
chord; a word is the concatenation of its characters' chords. Speakers
differ by gain and a small pitch factor. The seed drives sentence choice,
durations, speaker assignment and noise; the tone patterns never change.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Utterance, write_manifest
from .features import write_wav
from .tokenizer import Lexicon

SAMPLE_RATE = 8000

# character -> (syllable, CI-phonemes)
CHARACTERS = {
    "一": ("YI1", "Y IY1"),
    "种": ("ZHONG3", "JH UH3 NG3"),
    "信": ("XIN4", "X IY4 N4"),
    "念": ("NIAN4", "N IY4 AE4 N4"),
    "我": ("WO3", "W UO3"),
    "们": ("MEN2", "M EH2 N2"),
    "你": ("NI3", "N IY3"),
    "好": ("HAO3", "H AW3"),
    "天": ("TIAN1", "T IY1 AE1 N1"),
    "气": ("QI4", "CH IY4"),
    "很": ("HEN3", "H EH3 N3"),
    "大": ("DA4", "D AA4"),
    "家": ("JIA1", "JH IY1 AA1"),
    "学": ("XUE2", "X UE2"),
    "生": ("SHENG1", "SH EH1 NG1"),
    "中": ("ZHONG1", "JH UH1 NG1"),
    "国": ("GUO2", "G UO2"),
    "人": ("REN2", "R EH2 N2"),
    "说": ("SHUO1", "SH UO1"),
    "话": ("HUA4", "H UA4"),
    "明": ("MING2", "M IY2 NG2"),
    "白": ("BAI2", "B AY2"),
    "朋": ("PENG2", "P EH2 NG2"),
    "友": ("YOU3", "Y OW3"),
}
EXTRA_SYLLABLES = {"HAO4": "H AW4", "OU1": "OW1", "KEI1": "K EY1"}

WORDS = (
    "一种", "信念", "我们", "你好", "天气", "很好", "大家", "学生", "中国", "人",
    "说话", "明白", "朋友", "好", "大", "中国人", "我", "你", "天", "OK",
)

_LOW = (350.0, 550.0, 750.0, 950.0, 1150.0, 1350.0)
_HIGH = (1700.0, 2050.0, 2400.0, 2750.0, 3100.0)
_SEGMENTS = list(CHARACTERS) + ["O", "K"]
CHORDS = {seg: (_LOW[i % 6], _HIGH[(i // 6 + i) % 5]) for i, seg in enumerate(_SEGMENTS)}

TRAIN_SPEAKERS = {f"spk{i}": (0.97 + 0.012 * i, 0.5 + 0.08 * i) for i in range(6)}
TEST_SPEAKERS = {"spk6": (0.985, 0.6), "spk7": (1.015, 0.8)}


def segments(word: str) -> list[str]:
    return ["O", "K"] if word == "OK" else list(word)


def toy_lexicon() -> Lexicon:
    prons = {}
    for w in WORDS:
        if w == "OK":
            prons[w] = [["OU1", "KEI1"]]
        else:
            prons[w] = [[CHARACTERS[c][0] for c in w]]
    prons["好"].append(["HAO4"])
    phones = {syl: ph.split() for syl, ph in CHARACTERS.values()}
    phones.update({syl: ph.split() for syl, ph in EXTRA_SYLLABLES.items()})
    return Lexicon(prons, phones)


def _tone(seg, dur, pitch, rng):
    n = int(dur * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    f1, f2 = CHORDS[seg]
    ph = rng.uniform(0, 2 * np.pi, size=2)
    x = 0.5 * np.sin(2 * np.pi * f1 * pitch * t + ph[0]) + 0.35 * np.sin(2 * np.pi * f2 * pitch * t + ph[1])
    ramp = min(n // 2, int(0.01 * SAMPLE_RATE))
    env = np.ones(n)
    env[:ramp] = np.linspace(0, 1, ramp)
    env[n - ramp:] = np.linspace(1, 0, ramp)
    return x * env


def synthesize(words, pitch, gain, rng) -> np.ndarray:
    parts = [np.zeros(int(rng.uniform(0.05, 0.12) * SAMPLE_RATE))]
    for w in words:
        for seg in segments(w):
            parts.append(_tone(seg, rng.uniform(0.11, 0.16), pitch, rng))
            parts.append(np.zeros(int(rng.uniform(0.02, 0.035) * SAMPLE_RATE)))
        parts.append(np.zeros(int(rng.uniform(0.05, 0.08) * SAMPLE_RATE)))
    x = np.concatenate(parts) * gain
    x += rng.normal(0, 0.005, size=len(x))
    return np.clip(x, -0.99, 0.99)


def generate(out_dir, seed: int = 1, n_train: int = 200, n_test: int = 20,
             min_words: int = 2, max_words: int = 4) -> dict[str, Path]:
    """Write wavs, ``train.tsv``, ``test.tsv``, ``lexicon.txt`` and ``syllables.txt``."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = {}
    for split, n, speakers in (("train", n_train, TRAIN_SPEAKERS), ("test", n_test, TEST_SPEAKERS)):
        spk_ids = sorted(speakers)
        utts = []
        for i in range(n):
            words = [WORDS[k] for k in rng.integers(0, len(WORDS), size=rng.integers(min_words, max_words + 1))]
            spk = spk_ids[int(rng.integers(0, len(spk_ids)))]
            pitch, gain = speakers[spk]
            uid = f"{split}-{i:04d}"
            wav = out / "wav" / f"{uid}.wav"
            write_wav(wav, synthesize(words, pitch, gain, rng), SAMPLE_RATE)
            utts.append(Utterance(uid, str(wav.resolve()), spk, " ".join(words)))
        paths[split] = out / f"{split}.tsv"
        write_manifest(utts, paths[split])
    lex = toy_lexicon()
    paths["lexicon"] = out / "lexicon.txt"
    paths["syllables"] = out / "syllables.txt"
    lex.save(paths["lexicon"], paths["syllables"])
    return paths

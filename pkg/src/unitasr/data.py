"""Corpus manifests and transcript normalization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    id: str
    audio_path: str
    speaker_id: str
    transcript: str


@dataclass(frozen=True)
class Manifest:
    utterances: tuple[Utterance, ...] = ()
    split_tag: str = "train"

    def __post_init__(self):
        if self.split_tag not in ("train", "dev", "test"):
            raise ManifestError(f"bad split tag {self.split_tag!r}")

    def __iter__(self):
        return iter(self.utterances)

    def __len__(self):
        return len(self.utterances)

    def __getitem__(self, i):
        return self.utterances[i]

    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self.utterances}

    def by_speaker(self) -> dict[str, list[Utterance]]:
        groups: dict[str, list[Utterance]] = {}
        for u in self.utterances:
            groups.setdefault(u.speaker_id, []).append(u)
        return groups


_DELETED_TOKENS = {"·", "+"}
_WS = re.compile(r"\s+")


def normalize_transcript(raw: str) -> str:
    """Collapse whitespace and drop the stray ``·`` and ``+`` tokens."""
    for tok in _DELETED_TOKENS:
        raw = raw.replace(tok, " ")
    return _WS.sub(" ", raw).strip()


def load_manifest(path, split_tag: str = "train") -> Manifest:
    """Read a ``id<TAB>audio_path<TAB>speaker_id<TAB>transcript`` file.

    Blank lines and lines starting with ``#`` are skipped. Transcripts are
    normalized on load; fields past the fourth are joined back into the
    transcript with tabs collapsed.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    seen: dict[str, int] = {}
    utts = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 4:
                raise ManifestError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            uid, audio, spk = parts[0], parts[1], parts[2]
            text = normalize_transcript(" ".join(parts[3:]))
            if not uid:
                raise ManifestError(f"{path}:{lineno}: empty utterance id")
            if not text:
                raise ManifestError(f"{path}:{lineno}: empty transcript for {uid!r}")
            if uid in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate id {uid!r} (first seen on line {seen[uid]})"
                )
            seen[uid] = lineno
            utts.append(Utterance(uid, audio, spk, text))
    utts.sort(key=lambda u: u.id)
    return Manifest(tuple(utts), split_tag)


def write_manifest(manifest: Manifest | list[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in manifest:
            f.write(f"{u.id}\t{u.audio_path}\t{u.speaker_id}\t{u.transcript}\n")

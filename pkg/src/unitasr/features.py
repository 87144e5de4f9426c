"""Acoustic frontend: log-Mel filterbanks, per-speaker CMVN, frame stacking,
speed perturbation and the binary feature cache."""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_FLOOR = 1e-10
CACHE_MAGIC = b"FBK1"
_HEADER = struct.Struct("<4siif")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FrontendConfig:
    n_mels: int = 80
    window_ms: float = 25.0
    shift_ms: float = 10.0
    left_context: int = 3
    downsample: int = 3
    sample_rate_hz: int = 8000

    def __post_init__(self):
        if self.n_mels <= 0:
            raise FeatureError("n_mels must be positive")
        if self.downsample < 1:
            raise FeatureError("downsample must be >= 1")
        if self.left_context < 0:
            raise FeatureError("left_context must be >= 0")
        if self.window_ms <= 0 or self.shift_ms <= 0 or self.sample_rate_hz <= 0:
            raise FeatureError("window, shift and sample rate must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.window_ms / 1000.0))

    @property
    def shift_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.shift_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        # zero-padding to >= 512 keeps the narrow low-frequency filters non-empty
        n = 512
        while n < self.window_samples:
            n *= 2
        return n

    @property
    def stacked_dim(self) -> int:
        return self.n_mels * (self.left_context + 1)


@dataclass
class FeatureMatrix:
    frames: np.ndarray  # (T, D)
    frame_shift_ms: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise FeatureError("frames must be a T x D matrix")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(hz):
    return 1127.0 * np.log1p(np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * np.expm1(np.asarray(mel, dtype=np.float64) / 1127.0)


def mel_center_frequencies(n_mels: int, sample_rate_hz: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    edges = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank(n_mels: int, n_fft: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular HTK-scale filters spanning 0 Hz to Nyquist, shape (n_mels, n_fft//2+1)."""
    edges_mel = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2)
    bin_mel = hz_to_mel(np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft)
    lo, mid, hi = edges_mel[:-2, None], edges_mel[1:-1, None], edges_mel[2:, None]
    up = (bin_mel - lo) / (mid - lo)
    down = (hi - bin_mel) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def num_frames(n_samples: int, cfg: FrontendConfig) -> int:
    return (n_samples - cfg.window_samples) // cfg.shift_samples + 1


def compute_logmel(waveform, cfg: FrontendConfig) -> FeatureMatrix:
    """Hamming-windowed STFT magnitude -> Mel filterbank -> natural log.

    No pre-emphasis or dithering is applied, so the output is a deterministic
    function of the samples.
    """
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise FeatureError("waveform must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise FeatureError("waveform contains non-finite samples")
    win, shift = cfg.window_samples, cfg.shift_samples
    if len(x) < win:
        raise FeatureError(f"waveform has {len(x)} samples, shorter than one window ({win})")
    t = num_frames(len(x), cfg)
    idx = np.arange(win)[None, :] + shift * np.arange(t)[:, None]
    frames = x[idx] * np.hamming(win)[None, :]
    mag = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1))
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate_hz)
    energies = mag @ fb.T
    return FeatureMatrix(np.log(np.maximum(energies, LOG_FLOOR)), cfg.shift_ms)


def cmvn_by_speaker(features: dict[str, list[FeatureMatrix]]) -> dict[str, list[FeatureMatrix]]:
    """Normalize each speaker's pooled frames to zero mean and unit variance.

    Statistics use the population variance (divide by T). Dimensions with
    zero variance are only mean-shifted.
    """
    out = {}
    for spk, mats in features.items():
        if not mats:
            raise FeatureError(f"speaker {spk!r} has no feature matrices")
        pooled = np.concatenate([m.frames for m in mats], axis=0).astype(np.float64)
        if pooled.shape[0] < 2:
            raise FeatureError(f"speaker {spk!r} has fewer than 2 frames")
        mean = pooled.mean(axis=0)
        # a constant column leaves round-off in std; test the values directly
        std = pooled.std(axis=0)
        std = np.where((np.ptp(pooled, axis=0) > 0) & (std > 0), std, 1.0)
        out[spk] = [
            FeatureMatrix(((m.frames - mean) / std).astype(m.frames.dtype), m.frame_shift_ms)
            for m in mats
        ]
    return out


def stack_downsample(f: FeatureMatrix, left_context: int = 3, downsample: int = 3) -> FeatureMatrix:
    """Concatenate each kept frame with its ``left_context`` predecessors.

    Output frame ``k`` is built from input frame ``k * downsample`` and the
    frames to its left in time order; positions before the start repeat
    frame 0.
    """
    t = len(f)
    if t < 1:
        raise FeatureError("need at least one frame to stack")
    centers = np.arange(0, t, downsample)
    offsets = np.arange(-left_context, 1)
    idx = np.clip(centers[:, None] + offsets[None, :], 0, t - 1)
    stacked = f.frames[idx].reshape(len(centers), -1)
    return FeatureMatrix(stacked, f.frame_shift_ms * downsample)


def speed_perturb(waveform, factor: float) -> np.ndarray:
    """Rescale the time axis by ``1/factor`` using linear interpolation.

    This changes duration and pitch together.
    """
    if factor <= 0:
        raise FeatureError("speed factor must be positive")
    x = np.asarray(waveform, dtype=np.float64)
    if factor == 1.0:
        return x.copy()
    n_out = int(round(len(x) / factor))
    pos = np.arange(n_out) * factor
    return np.interp(pos, np.arange(len(x)), x)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read 16-bit mono PCM and return samples scaled to [-1, 1) with the rate."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise FeatureError(f"{path}: expected 16-bit mono PCM")
        rate = w.getframerate()
        data = w.readframes(w.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0, rate


def write_wav(path, samples, sample_rate_hz: int) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate_hz)
        w.writeframes(pcm.tobytes())


def save_features(path, f: FeatureMatrix) -> None:
    t, d = f.frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, t, d, float(f.frame_shift_ms)))
        fh.write(np.ascontiguousarray(f.frames, dtype="<f4").tobytes())


def load_features(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FeatureError(f"{path}: truncated header")
    magic, t, d, shift = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise FeatureError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != t * d:
        raise FeatureError(f"{path}: expected {t * d} values, found {body.size}")
    return FeatureMatrix(body.reshape(t, d).astype(np.float32), shift)

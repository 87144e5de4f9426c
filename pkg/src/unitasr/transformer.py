"""Encoder-decoder Transformer for speech (filterbank input) and for
unit-to-character translation (token input)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import torch
from torch import nn


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    N: int = 6
    d_model: int = 512
    h: int = 8
    d_k: int = 64
    d_v: int = 64
    d_ff: int = 2048
    dropout_rate: float = 0.1
    input_kind: str = "filterbank"
    input_dim: int = 320
    src_vocab: int = 0
    tgt_vocab: int = 4
    max_len: int = 4096

    def __post_init__(self):
        if self.input_kind not in ("filterbank", "token"):
            raise ConfigError(f"input_kind must be filterbank or token, got {self.input_kind!r}")
        for name in ("d_model", "h", "d_k", "d_v", "d_ff", "tgt_vocab", "max_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.N < 0:
            raise ConfigError("N must be >= 0")
        if self.d_model % 2:
            raise ConfigError("d_model must be even for sinusoidal positions")
        if self.input_kind == "filterbank" and self.input_dim <= 0:
            raise ConfigError("filterbank input needs input_dim > 0")
        if self.input_kind == "token" and self.src_vocab <= 0:
            raise ConfigError("token input needs src_vocab > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        """``D512-H8`` or ``D1024-H16``, with d_ff = 4 * d_model."""
        table = {
            "D512-H8": dict(N=6, d_model=512, h=8, d_k=64, d_v=64, d_ff=2048),
            "D1024-H16": dict(N=6, d_model=1024, h=16, d_k=64, d_v=64, d_ff=4096),
        }
        if name not in table:
            raise ConfigError(f"unknown preset {name!r}")
        return cls(**{**table[name], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in types:
                raise ConfigError(f"unknown model config key {k!r}")
            t = types[k]
            kw[k] = v if t == "str" else (float(v) if t == "float" else int(v))
        return cls(**kw)


def positional_encoding(max_len: int, d_model: int) -> torch.Tensor:
    """Sinusoidal table: sin on even dims, cos on odd dims."""
    if max_len <= 0 or d_model <= 0:
        raise ConfigError("max_len and d_model must be positive")
    if d_model % 2:
        raise ConfigError("d_model must be even")
    pos = torch.arange(max_len, dtype=torch.float64)[:, None]
    rate = torch.pow(10000.0, torch.arange(0, d_model, 2, dtype=torch.float64) / d_model)
    pe = torch.zeros(max_len, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos / rate)
    pe[:, 1::2] = torch.cos(pos / rate)
    return pe


def scaled_dot_attention(q, k, v, mask=None, dropout=None):
    """softmax(q k^T / sqrt(d_k)) v over the last two dims.

    ``mask`` is boolean, broadcastable to ``(..., n_q, n_k)``, True where a key
    may be attended. Every query must keep at least one key.
    """
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    if mask is not None:
        if not bool(mask.any(-1).all()):
            raise ValueError("attention mask leaves a query with no visible key")
        scores = scores.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    if dropout is not None:
        weights = dropout(weights)
    return weights @ v


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model, h, d_k, d_v, dropout=0.0):
        super().__init__()
        self.h, self.d_k, self.d_v = h, d_k, d_v
        self.w_q = nn.Linear(d_model, h * d_k)
        self.w_k = nn.Linear(d_model, h * d_k)
        self.w_v = nn.Linear(d_model, h * d_v)
        self.w_o = nn.Linear(h * d_v, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x_q, x_kv, mask=None):
        # x_q: (B, q, d_model), x_kv: (B, n, d_model), mask: (B, q|1, n)
        b, nq, _ = x_q.shape
        nk = x_kv.shape[1]
        q = self.w_q(x_q).view(b, nq, self.h, self.d_k).transpose(1, 2)
        k = self.w_k(x_kv).view(b, nk, self.h, self.d_k).transpose(1, 2)
        v = self.w_v(x_kv).view(b, nk, self.h, self.d_v).transpose(1, 2)
        if mask is not None:
            mask = mask.unsqueeze(1)
        out = scaled_dot_attention(q, k, v, mask, self.dropout)
        return self.w_o(out.transpose(1, 2).reshape(b, nq, self.h * self.d_v))


class FeedForward(nn.Module):
    def __init__(self, d_model, d_ff, dropout=0.0):
        super().__init__()
        self.w_1 = nn.Linear(d_model, d_ff)
        self.w_2 = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.w_2(self.dropout(torch.relu(self.w_1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.h, cfg.d_k, cfg.d_v, cfg.dropout_rate)
        self.norm_1 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.norm_2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, mask):
        x = self.norm_1(x + self.dropout(self.self_attn(x, x, mask)))
        return self.norm_2(x + self.dropout(self.ff(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.h, cfg.d_k, cfg.d_v, cfg.dropout_rate)
        self.norm_1 = nn.LayerNorm(cfg.d_model)
        self.src_attn = MultiHeadAttention(cfg.d_model, cfg.h, cfg.d_k, cfg.d_v, cfg.dropout_rate)
        self.norm_2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.norm_3 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, y, memory, self_mask, src_mask):
        y = self.norm_1(y + self.dropout(self.self_attn(y, y, self_mask)))
        y = self.norm_2(y + self.dropout(self.src_attn(y, memory, src_mask)))
        return self.norm_3(y + self.dropout(self.ff(y)))


@dataclass
class EncoderOutput:
    states: torch.Tensor  # (B, n, d_model)
    mask: torch.Tensor  # (B, n) bool, True on real positions


def length_mask(lengths, max_len: int) -> torch.Tensor:
    lengths = torch.as_tensor(lengths)
    return torch.arange(max_len)[None, :] < lengths[:, None]


def causal_mask(m: int) -> torch.Tensor:
    return torch.ones(m, m, dtype=torch.bool).tril()


class Transformer(nn.Module):
    """Post-norm encoder-decoder with an ASR frontend or a token embedding."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.input_kind == "filterbank":
            self.frontend = nn.Linear(cfg.input_dim, cfg.d_model)
            self.frontend_norm = nn.LayerNorm(cfg.d_model)
        else:
            self.src_embed = nn.Embedding(cfg.src_vocab, cfg.d_model)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.N))
        self.tgt_embed = nn.Embedding(cfg.tgt_vocab, cfg.d_model)
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.N))
        self.output = nn.Linear(cfg.d_model, cfg.tgt_vocab)
        self.dropout = nn.Dropout(cfg.dropout_rate)
        # unit-scale after the sqrt(d_model) multiplier
        for emb in (getattr(self, "src_embed", None), self.tgt_embed):
            if emb is not None:
                nn.init.normal_(emb.weight, std=cfg.d_model ** -0.5)
        self.register_buffer(
            "pe", positional_encoding(cfg.max_len, cfg.d_model).float(), persistent=False
        )

    def _add_positions(self, x):
        if x.shape[1] > self.pe.shape[0]:
            raise ValueError(f"sequence of {x.shape[1]} exceeds max_len {self.pe.shape[0]}")
        return self.dropout(x + self.pe[: x.shape[1]].to(x.dtype))

    def input_frontend(self, feats):
        """layernorm(W x + b) per frame, mapping input_dim to d_model."""
        if feats.shape[-1] != self.cfg.input_dim:
            raise ValueError(f"expected feature dim {self.cfg.input_dim}, got {feats.shape[-1]}")
        return self.frontend_norm(self.frontend(feats))

    def embed_source(self, src):
        if self.cfg.input_kind == "filterbank":
            return self.input_frontend(src)
        return self.src_embed(src) * math.sqrt(self.cfg.d_model)

    def encode(self, src, src_lengths=None) -> EncoderOutput:
        """``src`` is (B, n, input_dim) features or (B, n) token ids."""
        if src.shape[1] == 0:
            raise ValueError("empty encoder input")
        n = src.shape[1]
        if src_lengths is None:
            src_lengths = torch.full((src.shape[0],), n)
        mask = length_mask(src_lengths, n)
        x = self._add_positions(self.embed_source(src))
        attn_mask = mask[:, None, :]
        for layer in self.encoder:
            x = layer(x, attn_mask)
        return EncoderOutput(x, mask)

    def decode(self, tgt_in, enc: EncoderOutput):
        """Logits (B, m, tgt_vocab); position t sees only targets up to t."""
        m = tgt_in.shape[1]
        y = self._add_positions(self.tgt_embed(tgt_in) * math.sqrt(self.cfg.d_model))
        self_mask = causal_mask(m)[None, :, :]
        src_mask = enc.mask[:, None, :]
        for layer in self.decoder:
            y = layer(y, enc.states, self_mask, src_mask)
        return self.output(y)

    def forward(self, src, src_lengths, tgt_in):
        return self.decode(tgt_in, self.encode(src, src_lengths))

    def parameter_manifest(self):
        return [(name, tuple(p.shape)) for name, p in self.named_parameters()]


def count_parameters(cfg: ModelConfig) -> int:
    """Learnable scalars implied by ``cfg``, computed from layer shapes."""
    d = cfg.d_model

    def linear(i, o):
        return i * o + o

    norm = 2 * d
    mha = 2 * linear(d, cfg.h * cfg.d_k) + linear(d, cfg.h * cfg.d_v) + linear(cfg.h * cfg.d_v, d)
    ff = linear(d, cfg.d_ff) + linear(cfg.d_ff, d)
    if cfg.input_kind == "filterbank":
        src = linear(cfg.input_dim, d) + norm
    else:
        src = cfg.src_vocab * d
    enc_layer = mha + ff + 2 * norm
    dec_layer = 2 * mha + ff + 3 * norm
    tgt = cfg.tgt_vocab * d + linear(d, cfg.tgt_vocab)
    return src + cfg.N * (enc_layer + dec_layer) + tgt

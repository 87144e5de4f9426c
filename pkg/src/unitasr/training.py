"""Label-smoothed training with a warmup schedule, clipped Adam updates,
periodic checkpoints and checkpoint averaging."""

from __future__ import annotations

import logging
import math
import random
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .checkpoint import average_checkpoints, save_checkpoint
from .tokenizer import BOS_ID, EOS_ID, PAD_ID
from .transformer import ModelConfig, Transformer

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    warmup_steps: int = 4000
    label_smoothing: float = 0.1
    clip_norm: float = 5.0
    batch_frames: int = 20000
    max_epochs: int = 10
    checkpoint_every: int = 0  # 0 means once per epoch
    average_last: int = 20
    seed: int = 1
    lr_scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise TrainingError("warmup_steps must be >= 1")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise TrainingError("label_smoothing must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in types:
                raise TrainingError(f"unknown train config key {k!r}")
            kw[k] = float(v) if types[k] == "float" else int(v)
        return cls(**kw)


def label_smoothed_loss(logits, targets, eps: float, pad_id: int = PAD_ID):
    """Mean cross-entropy against the smoothed target distribution.

    The target class keeps ``1 - eps``; the remaining mass is spread evenly
    over the other classes excluding ``pad_id``. Pad positions contribute
    neither loss nor gradient. Returns a scalar tensor (differentiable).
    """
    v = logits.shape[-1]
    logits = logits.reshape(-1, v)
    targets = targets.reshape(-1)
    keep = targets != pad_id
    n = int(keep.sum())
    if n == 0:
        raise TrainingError("all target positions are padding")
    logp = torch.log_softmax(logits[keep], dim=-1)
    t = targets[keep]
    nll = -logp.gather(1, t[:, None]).squeeze(1)
    if eps == 0.0:
        return nll.sum() / n
    support = torch.ones_like(logp, dtype=torch.bool)
    if 0 <= pad_id < v:
        support[:, pad_id] = False
    support.scatter_(1, t[:, None], False)
    others = support.sum(1).clamp(min=1).to(logp.dtype)
    smooth = -(logp * support).sum(1) / others
    return ((1.0 - eps) * nll + eps * smooth).sum() / n


def lr_schedule(step: int, d_model: int, warmup: int) -> float:
    """Warmup then inverse-sqrt decay, peaking at ``step == warmup``."""
    if step < 1:
        raise TrainingError("step must be >= 1")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class OptimizerState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9

    @classmethod
    def for_params(cls, params: dict, **kw) -> "OptimizerState":
        return cls(
            m={k: torch.zeros_like(p) for k, p in params.items()},
            v={k: torch.zeros_like(p) for k, p in params.items()},
            **kw,
        )


class NonFiniteGradient(TrainingError):
    pass


def global_norm(grads) -> float:
    return math.sqrt(sum(float((g.double() ** 2).sum()) for g in grads.values()))


def clip_and_step(params: dict, grads: dict, opt: OptimizerState, lr: float, clip_norm: float) -> float:
    """Clip gradients to a global L2 norm and apply one bias-corrected Adam update.

    Parameters and moments are updated in place. Returns the pre-clip norm.
    """
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NonFiniteGradient(f"non-finite gradient norm at step {opt.step + 1}")
    scale = clip_norm / norm if norm > clip_norm else 1.0
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    with torch.no_grad():
        for k, p in params.items():
            g = grads[k] * scale
            m = opt.m[k].mul_(b1).add_(g, alpha=1 - b1)
            v = opt.v[k].mul_(b2).addcmul_(g, g, value=1 - b2)
            p.sub_(lr * (m / c1) / ((v / c2).sqrt() + opt.eps))
    return norm


@dataclass
class Example:
    id: str
    src: np.ndarray  # (n, input_dim) features or (n,) token ids
    tgt: list[int]  # unit ids without <S>/</S>

    @property
    def length(self) -> int:
        return len(self.src)


def make_batches(examples, batch_frames: int, rng: random.Random):
    """Shuffle and group so that ``batch_size * longest`` stays within the budget."""
    order = list(range(len(examples)))
    rng.shuffle(order)
    batches, cur, longest = [], [], 0
    for i in order:
        n = examples[i].length
        if n > batch_frames:
            log.warning("skipping %s: %d frames exceed batch budget %d",
                        examples[i].id, n, batch_frames)
            continue
        if cur and max(longest, n) * (len(cur) + 1) > batch_frames:
            batches.append(cur)
            cur, longest = [], 0
        cur.append(examples[i])
        longest = max(longest, n)
    if cur:
        batches.append(cur)
    return batches


def collate(batch, input_kind: str, dtype=torch.float32):
    """Pad a batch; decoder input is <S>+targets, loss targets are targets+</S>."""
    b = len(batch)
    n = max(ex.length for ex in batch)
    lengths = torch.tensor([ex.length for ex in batch])
    if input_kind == "filterbank":
        dim = batch[0].src.shape[1]
        src = torch.zeros(b, n, dim, dtype=dtype)
        for i, ex in enumerate(batch):
            src[i, : ex.length] = torch.as_tensor(np.asarray(ex.src)).to(dtype)
    else:
        src = torch.full((b, n), PAD_ID, dtype=torch.long)
        for i, ex in enumerate(batch):
            src[i, : ex.length] = torch.as_tensor(ex.src, dtype=torch.long)
    m = max(len(ex.tgt) for ex in batch) + 1
    tgt_in = torch.full((b, m), PAD_ID, dtype=torch.long)
    tgt_out = torch.full((b, m), PAD_ID, dtype=torch.long)
    for i, ex in enumerate(batch):
        tgt_in[i, : len(ex.tgt) + 1] = torch.tensor([BOS_ID] + list(ex.tgt))
        tgt_out[i, : len(ex.tgt) + 1] = torch.tensor(list(ex.tgt) + [EOS_ID])
    return src, lengths, tgt_in, tgt_out


def model_params(model: torch.nn.Module) -> "OrderedDict[str, torch.Tensor]":
    return OrderedDict(model.named_parameters())


def evaluate_loss(model: Transformer, examples, batch_frames: int, eps: float) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in make_batches(examples, batch_frames, random.Random(0)):
            src, lengths, tgt_in, tgt_out = collate(batch, model.cfg.input_kind)
            logits = model(src, lengths, tgt_in)
            n = int((tgt_out != PAD_ID).sum())
            total += float(label_smoothed_loss(logits, tgt_out, eps)) * n
            count += n
    return total / max(count, 1)


@dataclass
class TrainResult:
    checkpoints: list[Path]
    averaged: Path
    epoch_losses: list[float]
    step_losses: list[float]


def train(examples, model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir, meta=None,
          dev_examples=None) -> TrainResult:
    """Run the full recipe, writing checkpoints, ``train.log`` and ``model.ckpt``."""
    if not examples:
        raise TrainingError("empty training set")
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(train_cfg.seed)
    rng = random.Random(train_cfg.seed)
    model = Transformer(model_cfg)
    params = model_params(model)
    opt = OptimizerState.for_params(params, beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                                    eps=train_cfg.adam_eps)
    meta = dict(meta or {})
    checkpoints, epoch_losses, step_losses = [], [], []

    def snapshot():
        path = ckpt_dir / f"ckpt-{opt.step:08d}.ckpt"
        save_checkpoint(path, model_cfg, params, {**meta, "step": opt.step})
        checkpoints.append(path)

    with open(out_dir / "train.log", "w", encoding="utf-8") as logf:
        logf.write("step\tepoch\tlr\tloss\tgrad_norm\n")
        for epoch in range(1, train_cfg.max_epochs + 1):
            model.train()
            ep_loss, ep_n = 0.0, 0
            for batch in make_batches(examples, train_cfg.batch_frames, rng):
                src, lengths, tgt_in, tgt_out = collate(batch, model_cfg.input_kind)
                for p in params.values():
                    p.grad = None
                loss = label_smoothed_loss(model(src, lengths, tgt_in), tgt_out,
                                           train_cfg.label_smoothing)
                if not torch.isfinite(loss):
                    raise TrainingError(f"non-finite loss at step {opt.step + 1}")
                loss.backward()
                grads = {k: p.grad if p.grad is not None else torch.zeros_like(p)
                         for k, p in params.items()}
                lr = train_cfg.lr_scale * lr_schedule(opt.step + 1, model_cfg.d_model,
                                                      train_cfg.warmup_steps)
                gnorm = clip_and_step(params, grads, opt, lr, train_cfg.clip_norm)
                lv = loss.item()
                step_losses.append(lv)
                n = int((tgt_out != PAD_ID).sum())
                ep_loss += lv * n
                ep_n += n
                logf.write(f"{opt.step}\t{epoch}\t{lr:.6e}\t{lv:.6f}\t{gnorm:.6f}\n")
                if train_cfg.checkpoint_every and opt.step % train_cfg.checkpoint_every == 0:
                    snapshot()
            epoch_losses.append(ep_loss / max(ep_n, 1))
            msg = f"epoch {epoch} loss {epoch_losses[-1]:.4f}"
            if dev_examples:
                msg += f" dev {evaluate_loss(model, dev_examples, train_cfg.batch_frames, train_cfg.label_smoothing):.4f}"
            log.info(msg)
            if not train_cfg.checkpoint_every:
                snapshot()
    if not checkpoints or checkpoints[-1].name != f"ckpt-{opt.step:08d}.ckpt":
        snapshot()
    k = min(train_cfg.average_last, len(checkpoints))
    cfg, avg, last_meta = average_checkpoints(checkpoints[-k:])
    averaged = out_dir / "model.ckpt"
    save_checkpoint(averaged, cfg, avg, {**last_meta, "averaged": k})
    return TrainResult(checkpoints, averaged, epoch_losses, step_losses)


def config_dict(cfg) -> dict:
    return asdict(cfg)

"""Checkpoint files: a text header followed by little-endian float32 payload.

Layout::

    #unitasr-checkpoint v1
    [config]
    key = value            (ModelConfig fields)
    [meta]
    key = value            (free-form: step, unit_kind, ...)
    [params]
    name<TAB>d0,d1,...<TAB>offset   (offset in elements)
    [payload]
    <float32 data in manifest order>
"""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .transformer import ModelConfig, Transformer

MAGIC = "#unitasr-checkpoint v1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, cfg: ModelConfig, params: "OrderedDict[str, torch.Tensor]", meta=None) -> None:
    lines = [MAGIC, "[config]"]
    lines += [f"{k} = {v}" for k, v in cfg.to_dict().items()]
    lines.append("[meta]")
    lines += [f"{k} = {v}" for k, v in (meta or {}).items()]
    lines.append("[params]")
    offset = 0
    chunks = []
    for name, t in params.items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        lines.append(f"{name}\t{','.join(map(str, arr.shape))}\t{offset}")
        offset += arr.size
        chunks.append(np.ascontiguousarray(arr).tobytes())
    lines.append("[payload]")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("utf-8"))
        for c in chunks:
            f.write(c)


def load_checkpoint(path):
    """Return ``(ModelConfig, OrderedDict name -> float32 tensor, meta dict)``."""
    raw = Path(path).read_bytes()
    marker = b"\n[payload]\n"
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise CheckpointError(f"{path}: not a checkpoint file")
    header = raw[:cut].decode("utf-8").split("\n")[1:]
    payload = raw[cut + len(marker):]
    section = None
    cfg_kv, meta, manifest = {}, {}, []
    for line in header:
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            continue
        if section in ("config", "meta"):
            k, _, v = line.partition(" = ")
            (cfg_kv if section == "config" else meta)[k] = v
        elif section == "params":
            name, shape, off = line.split("\t")
            dims = tuple(int(s) for s in shape.split(",") if s)
            manifest.append((name, dims, int(off)))
    data = np.frombuffer(payload, dtype="<f4")
    params = OrderedDict()
    for name, dims, off in manifest:
        n = int(np.prod(dims)) if dims else 1
        if off + n > data.size:
            raise CheckpointError(f"{path}: payload too short for {name}")
        params[name] = torch.from_numpy(data[off:off + n].reshape(dims).copy())
    return ModelConfig.from_dict(cfg_kv), params, meta


def load_model(path, dtype=torch.float32) -> tuple[Transformer, dict]:
    cfg, params, meta = load_checkpoint(path)
    model = Transformer(cfg)
    model.load_state_dict(params)
    model.to(dtype).eval()
    return model, meta


def average_checkpoints(paths):
    """Element-wise mean of the parameters in ``paths`` (accumulated in float64)."""
    paths = list(paths)
    if not paths:
        raise CheckpointError("nothing to average")
    cfg0, acc, meta = None, None, None
    for p in paths:
        cfg, params, meta = load_checkpoint(p)
        if cfg0 is None:
            cfg0 = cfg
            acc = OrderedDict((k, v.double()) for k, v in params.items())
            continue
        if cfg != cfg0 or list(params) != list(acc):
            raise CheckpointError(f"{p}: model config differs from {paths[0]}")
        for k, v in params.items():
            acc[k] += v.double()
    avg = OrderedDict((k, (v / len(paths)).float()) for k, v in acc.items())
    return cfg0, avg, meta

"""Flat ``key = value`` experiment configs.

One file carries the fields of FrontendConfig, ModelConfig, TrainConfig and
DecodeConfig (their names never collide), plus experiment keys such as
``unit_kind``, ``num_merges`` and ``preset``.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .decode import DecodeConfig
from .features import FrontendConfig
from .training import TrainConfig
from .transformer import ModelConfig

EXPERIMENT_KEYS = {"unit_kind", "num_merges", "preset", "speed_perturb"}


class ConfigParseError(ValueError):
    pass


def parse_lines(lines, source="<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigParseError(f"{source}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    return parse_lines(Path(path).read_text(encoding="utf-8").splitlines(), str(path))


def parse_overrides(items) -> dict[str, str]:
    return parse_lines(items or [], "--set")


def _coerce(cls, raw: dict[str, str]):
    kw = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        v = raw[f.name]
        try:
            if f.type == "bool":
                if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(v)
                kw[f.name] = v.lower() in ("true", "1", "yes")
            elif f.type == "int":
                kw[f.name] = int(v)
            elif f.type == "float":
                kw[f.name] = float(v)
            else:
                kw[f.name] = v
        except ValueError:
            raise ConfigParseError(f"bad value for {f.name}: {v!r}") from None
    return kw


_SECTIONS = (FrontendConfig, ModelConfig, TrainConfig, DecodeConfig)


def check_keys(raw: dict[str, str]) -> None:
    known = set(EXPERIMENT_KEYS)
    for cls in _SECTIONS:
        known.update(f.name for f in fields(cls))
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigParseError(f"unknown config keys: {', '.join(unknown)}")


def frontend_config(raw) -> FrontendConfig:
    return FrontendConfig(**_coerce(FrontendConfig, raw))


def train_config(raw) -> TrainConfig:
    return TrainConfig(**_coerce(TrainConfig, raw))


def decode_config(raw) -> DecodeConfig:
    return DecodeConfig(**_coerce(DecodeConfig, raw))


def model_config(raw, **fixed) -> ModelConfig:
    kw = _coerce(ModelConfig, raw)
    kw.update(fixed)
    if "preset" in raw:
        return ModelConfig.preset(raw["preset"], **kw)
    return ModelConfig(**kw)


def dump_config(path, raw: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in raw.items()), encoding="utf-8")

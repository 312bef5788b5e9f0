"""Flat ``key = value`` run configuration: one vocabulary shared by every
command, unknown keys rejected, and the fully resolved values echoed into
each output directory so runs are self-describing."""

from __future__ import annotations

import dataclasses
import os

from .datagen import BaShapesConfig, CoraLikeConfig, SynCoraConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _float_tuple(raw: str) -> tuple:
    return tuple(float(x) for x in str(raw).split(",") if x != "")


def _int_list(raw: str) -> list[int]:
    return [int(x) for x in str(raw).split(",") if x != ""]


def _bool(raw: str) -> bool:
    if isinstance(raw, bool):
        return raw
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


_EXTRA_KEYS = {
    "data": str,
    "out": str,
    "source": str,
    "model": str,
    "seeds": _int_list,
    "threads": int,
    "targets": str,
    "metrics": str,
    "rates": _float_tuple,
    "rate": float,
    "dot": _bool,
    "crucial_frac": float,
    "strict_isolated": _bool,
    "ground_truth": str,
}


def _vocabulary() -> dict:
    vocab = dict(_EXTRA_KEYS)
    for cls in (TrainConfig, BaShapesConfig, SynCoraConfig, CoraLikeConfig):
        for f in dataclasses.fields(cls):
            typ = f.type if isinstance(f.type, type) else None
            if typ is None:
                name = str(f.type)
                typ = {"int": int, "float": float, "str": str,
                       "tuple": _float_tuple, "bool": _bool}.get(name)
            if typ is tuple:
                typ = _float_tuple
            if typ is None:
                raise AssertionError(f"unmapped config field type for {f.name}")
            existing = vocab.get(f.name)
            if existing is not None and existing is not typ:
                raise AssertionError(f"conflicting config key {f.name}")
            vocab[f.name] = typ
    return vocab


VOCABULARY = _vocabulary()


def parse_config_file(path: str) -> dict:
    """Read ``key = value`` lines (``#`` comments) into typed values."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in VOCABULARY:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = VOCABULARY[key](raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {e}") from None
    return values


def coerce_value(key: str, raw) -> object:
    if key not in VOCABULARY:
        raise ConfigError(f"unknown config key {key!r}")
    if isinstance(raw, str):
        return VOCABULARY[key](raw)
    return raw


def build_dataclass(cls, values: dict):
    """Instantiate a config dataclass from the subset of matching keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in values.items() if k in names}
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def echo_config(values: dict, out_dir: str, name: str = "resolved_config.txt") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(values):
            v = values[key]
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            fh.write(f"{key} = {v}\n")
    return path

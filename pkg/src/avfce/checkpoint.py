"""AVFC checkpoint format.

Layout (little-endian)::

    b"AVFC"  u32 version
    u32 config_len   config_len bytes of compact, key-sorted JSON
    u64 iterations   u64 seed
    u32 n_raw        n_raw arrays     (raw weights)
    u32 n_ema        n_ema arrays     (EMA weights)

    array := u16 name_len, name (utf-8), u8 ndim, ndim x u32 dims, f64 data
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .network import VelocityNet, param_names

MAGIC = b"AVFC"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ExperimentConfig
    params: list
    ema: list
    iterations: int = 0
    seed: int = 0

    @property
    def domain(self) -> str:
        return self.config.train.domain

    def net(self, use_ema: bool = True) -> VelocityNet:
        return VelocityNet(self.config.backbone, params=self.ema if use_ema else self.params)

    @classmethod
    def from_state(cls, config: ExperimentConfig, state) -> "Checkpoint":
        return cls(config, state.net.arrays(), list(state.ema.shadow), state.iteration, config.train.seed)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        blob = self.config.to_json().encode("utf-8")
        buf.write(MAGIC)
        buf.write(struct.pack("<II", VERSION, len(blob)))
        buf.write(blob)
        buf.write(struct.pack("<QQ", self.iterations, self.seed))
        names = param_names(self.config.backbone)
        for group in (self.params, self.ema):
            buf.write(struct.pack("<I", len(group)))
            for name, arr in zip(names, group):
                _write_array(buf, name, np.asarray(arr, dtype=np.float64))
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "<bytes>") -> "Checkpoint":
        buf = io.BytesIO(raw)
        if buf.read(4) != MAGIC:
            raise CheckpointError(f"{source}: not an AVFC checkpoint (bad magic)")
        version, blob_len = _unpack(buf, "<II", source)
        if version != VERSION:
            raise CheckpointError(f"{source}: format version {version}, this build reads {VERSION}")
        try:
            config = ExperimentConfig.from_dict(json.loads(buf.read(blob_len).decode("utf-8")))
        except (ConfigError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"{source}: bad config blob ({exc})") from exc
        iterations, seed = _unpack(buf, "<QQ", source)
        expected = VelocityNet(config.backbone)._expected_shapes()
        names = param_names(config.backbone)
        groups = []
        for label in ("raw", "ema"):
            (count,) = _unpack(buf, "<I", source)
            if count != len(expected):
                raise CheckpointError(
                    f"{source}: {label} group holds {count} arrays, config implies {len(expected)}"
                )
            arrays = []
            for want_name, shape in zip(names, expected):
                name, arr = _read_array(buf, source)
                if name != want_name or arr.shape != shape:
                    raise CheckpointError(
                        f"{source}: {label} array {name!r} {arr.shape} does not match "
                        f"expected {want_name!r} {shape}"
                    )
                arrays.append(arr)
            groups.append(arrays)
        if buf.read(1):
            raise CheckpointError(f"{source}: trailing bytes after payload")
        return cls(config, groups[0], groups[1], iterations, seed)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes(), str(path))

    def summary(self) -> dict:
        n_params = sum(int(np.size(p)) for p in self.params)
        return {
            "format_version": VERSION,
            "iterations": self.iterations,
            "seed": self.seed,
            "n_params": n_params,
            "domain": self.domain,
            "config": self.config.to_dict(),
        }


def _unpack(buf, fmt: str, source: str):
    size = struct.calcsize(fmt)
    chunk = buf.read(size)
    if len(chunk) != size:
        raise CheckpointError(f"{source}: truncated checkpoint")
    return struct.unpack(fmt, chunk)


def _write_array(buf, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    buf.write(struct.pack("<H", len(encoded)))
    buf.write(encoded)
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr).astype("<f8").tobytes())


def _read_array(buf, source: str) -> tuple[str, np.ndarray]:
    (name_len,) = _unpack(buf, "<H", source)
    name = buf.read(name_len).decode("utf-8")
    (ndim,) = _unpack(buf, "<B", source)
    shape = _unpack(buf, f"<{ndim}I", source)
    count = int(np.prod(shape)) if ndim else 1
    data = buf.read(count * 8)
    if len(data) != count * 8:
        raise CheckpointError(f"{source}: truncated data for {name!r}")
    return name, np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)

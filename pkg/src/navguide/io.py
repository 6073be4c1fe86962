"""Checkpoint and dataset file formats.

Checkpoint layout (little-endian)::

    "NDIF" | version u16 | n_waypoints, ctx_dim, temb_dim, hidden, depth u32
    | r_max f64 | T u32 | schedule kind u8 | beta_start f64 | beta_end f64
    | n_params u64 | n_params x f32 | CRC32 u32 of everything before it
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Iterable

import numpy as np

from .denoiser import Architecture, DenoiserParams
from .diffusion import Model, make_schedule
from .errors import CheckpointError
from .geometry import NormSpec
from .sim.expert import ExpertSample

CKPT_MAGIC = b"NDIF"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sH5IdIBddQ")
_KINDS = {"cosine": 0, "linear": 1}


def checkpoint_bytes(model: Model) -> bytes:
    a = model.params.arch
    s = model.sched
    flat = model.params.flat().astype("<f4")
    header = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, a.n_waypoints, a.ctx_dim, a.temb_dim,
                               a.hidden, a.depth, model.norm.r_max, s.T, _KINDS[s.kind],
                               s.beta_start, s.beta_end, flat.size)
    body = header + flat.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(blob: bytes) -> Model:
    if len(blob) < _CKPT_HEADER.size + 4:
        raise CheckpointError("checkpoint truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    (magic, version, n_w, ctx_dim, temb_dim, hidden, depth, r_max, T, kind,
     beta_start, beta_end, count) = _CKPT_HEADER.unpack_from(body)
    if magic != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    arch = Architecture(n_w, ctx_dim, temb_dim, hidden, depth)
    if count != arch.param_count or len(body) != _CKPT_HEADER.size + 4 * count:
        raise CheckpointError("parameter payload does not match the architecture")
    flat = np.frombuffer(body, dtype="<f4", offset=_CKPT_HEADER.size, count=count).astype(float)
    kind_name = {v: k for k, v in _KINDS.items()}.get(kind)
    if kind_name is None:
        raise CheckpointError(f"unknown schedule kind code {kind}")
    return Model(DenoiserParams.from_flat(arch, flat), make_schedule(T, kind_name, beta_start, beta_end),
                 NormSpec(r_max))


def save_model(model: Model, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_model(path) -> Model:
    return model_from_bytes(Path(path).read_bytes())


def write_dataset(samples: Iterable[ExpertSample], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(s.to_json() + "\n")
            n += 1
    return n


class DatasetError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_dataset(path, ctx_dim: int | None = None, n_waypoints: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Load ``(ctx, npath)`` arrays from NDJSON, validating every line."""
    ctxs, paths = [], []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(i, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "ctx" not in rec or "npath" not in rec:
                raise DatasetError(i, "record needs 'ctx' and 'npath'")
            ctx = np.asarray(rec["ctx"], dtype=float)
            npath = np.asarray(rec["npath"], dtype=float)
            if ctx.ndim != 1 or npath.ndim != 1 or npath.size % 2:
                raise DatasetError(i, "ctx and npath must be flat lists (npath of even length)")
            if ctx_dim is not None and ctx.size != ctx_dim:
                raise DatasetError(i, f"ctx has {ctx.size} entries, expected {ctx_dim}")
            if n_waypoints is not None and npath.size != 2 * n_waypoints:
                raise DatasetError(i, f"npath has {npath.size // 2} waypoints, expected {n_waypoints}")
            if paths and (npath.size != paths[0].size or ctx.size != ctxs[0].size):
                raise DatasetError(i, "record shape differs from the first record")
            if not (np.all(np.isfinite(ctx)) and np.all(np.isfinite(npath))):
                raise DatasetError(i, "non-finite value")
            ctxs.append(ctx)
            paths.append(npath)
    if not paths:
        raise DatasetError(0, "dataset is empty")
    return np.array(ctxs), np.array(paths)

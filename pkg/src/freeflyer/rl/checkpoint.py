"""Versioned binary policy checkpoints with a JSON sidecar.

Layout (little-endian):
    magic  b"FFRL"
    uint32 format version (1)
    uint32 array count
    per array: uint16 name length, utf-8 name, uint8 ndim,
               ndim x uint32 dims, then the float64 payload
    uint32 crc32 over everything above

The sidecar <path>.json carries the training config, environment
dimensions, and observation-normalization constants so deployment
reconstructs observations exactly as training did.  Writes go through a
temp file and rename, so a reader never sees partial state.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .nets import MlpParams

MAGIC = b"FFRL"
VERSION = 1


def save_checkpoint(path, params: MlpParams, meta: dict) -> None:
    """Write the binary checkpoint and its JSON sidecar atomically."""
    path = Path(path)
    arrays = params.arrays()
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, a in arrays:
        encoded = name.encode("utf-8")
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{max(a.ndim, 1)}I", *(a.shape or (0,))) if a.ndim else b"")
        parts.append(a.tobytes())
    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)

    sidecar = path.with_suffix(path.suffix + ".json")
    tmp_json = sidecar.with_suffix(sidecar.suffix + ".tmp")
    tmp_json.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    os.replace(tmp_json, sidecar)


def load_checkpoint(path, expect_obs_dim: int | None = None,
                    expect_act_dim: int | None = None) -> tuple[MlpParams, dict]:
    """Read and verify a checkpoint; returns (params, sidecar metadata)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 12:
        raise CheckpointError(f"checkpoint {path} is truncated ({len(blob)} bytes)")
    body, crc_bytes = blob[:-4], blob[-4:]
    if struct.unpack("<I", crc_bytes)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise CheckpointError(f"checkpoint {path} failed its checksum (truncated or corrupt)")
    if body[:4] != MAGIC:
        raise CheckpointError(f"checkpoint {path} has wrong magic {body[:4]!r}")
    version, n_arrays = struct.unpack("<II", body[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")

    offset = 12
    named = {}
    try:
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", body, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", body, offset) if ndim else ()
            offset += 4 * ndim
            count = int(np.prod(dims)) if dims else 1
            a = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(dims)
            offset += 8 * count
            named[name] = a.copy()
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} is malformed: {exc}") from exc

    try:
        params = MlpParams.from_arrays(named)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint {path} is missing array {exc}") from exc

    if expect_obs_dim is not None and params.obs_dim != expect_obs_dim:
        raise CheckpointError(f"checkpoint obs dim {params.obs_dim}, expected {expect_obs_dim}")
    if expect_act_dim is not None and params.act_dim != expect_act_dim:
        raise CheckpointError(f"checkpoint act dim {params.act_dim}, expected {expect_act_dim}")

    sidecar = path.with_suffix(path.suffix + ".json")
    meta = {}
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return params, meta

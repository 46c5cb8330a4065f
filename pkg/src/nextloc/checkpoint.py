"""Versioned binary checkpoints: header JSON + little-endian tensor blobs + sha256.

File layout:
    bytes 0..7    magic b"NLCKPT01"
    bytes 8..15   header length, u64 little-endian
    header        UTF-8 JSON: tensor directory (name, shape, dtype, offset)
                  plus a free-form "meta" object (config, seed, epoch, ...)
    payload       tensor data, C order, little-endian, concatenated
    trailer       sha256 digest (32 bytes) of everything before it
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

MAGIC = b"NLCKPT01"

_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8"}


class CheckpointError(RuntimeError):
    pass


def _dtype_tag(arr: np.ndarray) -> str:
    kind = arr.dtype.str.lstrip("<>|=")
    if kind not in _DTYPES:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for checkpointing")
    return kind


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict):
    """Write arrays and meta to path; round trip is bit-exact."""
    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        tag = _dtype_tag(arr)
        blob = arr.astype(_DTYPES[tag], copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag, "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"format": 1, "tensors": entries, "meta": meta},
                        sort_keys=True, ensure_ascii=True).encode("utf-8")
    digest = hashlib.sha256()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        for chunk in (MAGIC, len(header).to_bytes(8, "little"), header, *blobs):
            fh.write(chunk)
            digest.update(chunk)
        fh.write(digest.digest())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; verifies magic and sha256 trailer."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, trailer = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != trailer:
        raise CheckpointError(f"{path}: checksum mismatch (corrupted file)")
    hlen = int.from_bytes(raw[len(MAGIC): len(MAGIC) + 8], "little")
    hstart = len(MAGIC) + 8
    header = json.loads(raw[hstart: hstart + hlen].decode("utf-8"))
    if header.get("format") != 1:
        raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')}")
    payload = raw[hstart + hlen: -32]
    arrays = {}
    for ent in header["tensors"]:
        dt = np.dtype(_DTYPES[ent["dtype"]])
        count = int(np.prod(ent["shape"])) if ent["shape"] else 1
        start = ent["offset"]
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=start)
        arrays[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return arrays, header["meta"]


def restore_into(params, arrays: dict[str, np.ndarray]):
    """Copy checkpoint arrays into a parameter registry, strictly by name.

    Raises with the full lists of missing/unexpected/mismatched tensors so a
    checkpoint from a different model configuration fails loudly.
    """
    param_map = {p.name: p for p in params}
    saved = {k for k in arrays if not k.startswith("opt.")}
    missing = sorted(set(param_map) - saved)
    unexpected = sorted(saved - set(param_map))
    mismatched = [
        f"{n}: checkpoint {arrays[n].shape} != model {param_map[n].shape}"
        for n in sorted(saved & set(param_map))
        if tuple(arrays[n].shape) != tuple(param_map[n].shape)
    ]
    if missing or unexpected or mismatched:
        lines = []
        if missing:
            lines.append("missing from checkpoint: " + ", ".join(missing))
        if unexpected:
            lines.append("unexpected in checkpoint: " + ", ".join(unexpected))
        if mismatched:
            lines.append("shape mismatch: " + "; ".join(mismatched))
        raise CheckpointError("checkpoint does not match model: " + " | ".join(lines))
    for name, p in param_map.items():
        p.data = arrays[name].astype(p.data.dtype, copy=True)

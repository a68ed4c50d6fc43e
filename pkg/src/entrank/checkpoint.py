"""Single-file binary checkpoints.

Layout::

    bytes 0..8    magic ``ENTRANK\\x01``
    bytes 8..12   little-endian uint32: JSON header length in bytes
    header        UTF-8 JSON: format version, model config, vocabulary,
                  free-form metadata, and a tensor index (name, dtype,
                  shape, byte offset into the payload)
    payload       raw little-endian float64 data; complex tensors are
                  stored as interleaved (real, imag) float64 pairs

A checkpoint is self-contained: it carries the vocabulary, so a saved
model can score text without the original corpus files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams, named_arrays

MAGIC = b"ENTRANK\x01"
FORMAT_VERSION = 1

_DTYPES = {"f8": np.dtype("<f8"), "c16": np.dtype("<c16")}


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible."""


def save_checkpoint(path, params: ModelParams, vocab: list[str], meta: dict | None = None) -> None:
    """Serialize ``params`` (plus vocabulary and metadata) to ``path``."""
    tensors = []
    chunks = []
    offset = 0
    for name, arr in named_arrays(params).items():
        if np.issubdtype(arr.dtype, np.complexfloating):
            dtype_tag, dtype = "c16", _DTYPES["c16"]
        else:
            dtype_tag, dtype = "f8", _DTYPES["f8"]
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        tensors.append(
            {
                "name": name,
                "dtype": dtype_tag,
                "shape": list(arr.shape),
                "offset": offset,
            }
        )
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "vocab": list(vocab),
        "meta": dict(meta or {}),
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path) -> tuple[ModelParams, list[str], dict]:
    """Read a checkpoint; returns ``(params, vocab, meta)``."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<I", blob[len(MAGIC) : len(MAGIC) + 4])
    header_start = len(MAGIC) + 4
    try:
        header = json.loads(blob[header_start : header_start + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version "
            f"{header.get('format_version')!r}"
        )
    payload = blob[header_start + header_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(
                f"{path}: unknown tensor dtype {entry['dtype']!r}"
            )
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        start = entry["offset"]
        if start + nbytes > len(payload):
            raise CheckpointError(
                f"{path}: tensor {entry['name']!r} overruns the payload"
            )
        arrays[entry["name"]] = (
            np.frombuffer(payload[start : start + nbytes], dtype=dtype)
            .reshape(shape)
            .copy()
        )
    config = ModelConfig.from_dict(header["config"])
    try:
        params = _assemble(config, arrays)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing tensor {exc}") from exc
    return params, list(header["vocab"]), dict(header.get("meta", {}))


def _assemble(config: ModelConfig, arrays: dict[str, np.ndarray]) -> ModelParams:
    entanglers: dict[int, list[np.ndarray]] = {}
    banks: dict[int, np.ndarray] = {}
    for name, arr in arrays.items():
        parts = name.split(".")
        if parts[0] == "entangler":
            entanglers.setdefault(int(parts[1]), []).append(None)
        elif parts[0] == "bank":
            banks[int(parts[1])] = arr
    for n in entanglers:
        layers = [None] * len(entanglers[n])
        for name, arr in arrays.items():
            parts = name.split(".")
            if parts[0] == "entangler" and int(parts[1]) == n:
                layers[int(parts[2])] = arr
        entanglers[n] = layers
    return ModelParams(
        config=config,
        amplitudes=arrays["amplitudes"],
        phases=arrays["phases"],
        entanglers=entanglers,
        banks=banks,
    )

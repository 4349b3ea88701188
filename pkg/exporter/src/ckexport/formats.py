"""Writers for the interchange formats: annotation JSON Lines and the CKEM
binary tensor container. Layout (little-endian):

    magic "CKEM" | version u16 | kind u8 (0=sentence, 1=token_layers) |
    layers u16 | dim u32 | unit count u32 |
    per unit: id length u16, UTF-8 id [, token count u32 when kind=1] |
    float32 payload

All writes go through a temp file in the target directory followed by an
atomic rename, so consumers never observe partial files.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"CKEM"
VERSION = 1
KIND_CODES = {"sentence": 0, "token_layers": 1}


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_jsonl(path, rows) -> None:
    atomic_write_text(path, "".join(json.dumps(r, ensure_ascii=False) + "\n"
                                    for r in rows))


def write_sentence_tensor(path, unit_ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(unit_ids):
        raise ValueError("matrix must be (units, dim)")
    chunks = [MAGIC, struct.pack("<HBHII", VERSION, KIND_CODES["sentence"], 1,
                                 matrix.shape[1], len(unit_ids))]
    for uid in unit_ids:
        raw = uid.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
    chunks.append(np.ascontiguousarray(matrix).tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def write_token_layers_tensor(path, unit_ids, units) -> None:
    """`units` is a list of (layers, tokens, dim) arrays, one per unit id."""
    if len(units) != len(unit_ids):
        raise ValueError("one array required per unit id")
    arrays = [np.asarray(u, dtype="<f4") for u in units]
    layers = arrays[0].shape[0]
    dim = arrays[0].shape[2]
    for a in arrays:
        if a.ndim != 3 or a.shape[0] != layers or a.shape[2] != dim:
            raise ValueError("dimension drift between units")
    chunks = [MAGIC, struct.pack("<HBHII", VERSION, KIND_CODES["token_layers"],
                                 layers, dim, len(unit_ids))]
    for uid, a in zip(unit_ids, arrays):
        raw = uid.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", a.shape[1]))
    for a in arrays:
        chunks.append(np.ascontiguousarray(a).tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def write_metadata(path, meta: dict) -> None:
    atomic_write_text(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")

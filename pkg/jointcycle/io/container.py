"""Parameter container: a plain-text header followed by raw little-endian tensor bytes.

    JCKPT1
    meta <key> <value>
    tensor <name> <dtype> <d0,d1,...> <offset> <nbytes>
    end

The binary payload starts right after the `end` line; offsets are relative to it.
`meta sha256` holds the digest of the payload. See docs/checkpoint_format.md.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import CheckpointError
from .artifacts import atomic_write_bytes

MAGIC = "JCKPT1"
DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}
NATIVE = {"f4": np.dtype(np.float32), "f8": np.dtype(np.float64)}


def _dtype_code(arr: np.ndarray) -> str:
    for code, dt in NATIVE.items():
        if arr.dtype == dt:
            return code
    raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")


def encode(tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> bytes:
    chunks: list[bytes] = []
    lines: list[str] = []
    offset = 0
    for name, value in tensors.items():
        if not name or any(c.isspace() for c in name):
            raise CheckpointError(f"invalid tensor name {name!r}")
        arr = np.asarray(value)
        code = _dtype_code(arr)
        raw = np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()
        shape = ",".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {code} {shape or '-'} {offset} {len(raw)}")
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)

    meta = dict(meta or {})
    meta["sha256"] = hashlib.sha256(payload).hexdigest()
    head = [MAGIC]
    for k in sorted(meta):
        v = str(meta[k])
        if not k or any(c.isspace() for c in k) or "\n" in v:
            raise CheckpointError(f"invalid meta entry {k!r}")
        head.append(f"meta {k} {v}")
    head += lines
    head.append("end")
    return ("\n".join(head) + "\n").encode("utf-8") + payload


def decode(blob: bytes, source: str = "<bytes>") -> tuple[dict[str, np.ndarray], dict[str, str]]:
    marker = b"\nend\n"
    cut = blob.find(marker)
    if not blob.startswith(MAGIC.encode() + b"\n") or cut < 0:
        raise CheckpointError(f"{source}: not a parameter container")
    payload = blob[cut + len(marker) :]
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    for line in blob[:cut].decode("utf-8").splitlines()[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            k, _, v = rest.partition(" ")
            meta[k] = v
        elif kind == "tensor":
            try:
                name, code, shape_s, off_s, n_s = rest.split(" ")
                shape = () if shape_s == "-" else tuple(int(d) for d in shape_s.split(","))
                off, n = int(off_s), int(n_s)
                dt = DTYPES[code]
            except (ValueError, KeyError):
                raise CheckpointError(f"{source}: malformed tensor line {line!r}") from None
            if off + n > len(payload) or n != int(np.prod(shape, dtype=np.int64)) * dt.itemsize:
                raise CheckpointError(f"{source}: tensor {name!r} is truncated or mis-sized")
            flat = np.frombuffer(payload, dtype=dt, count=n // dt.itemsize, offset=off)
            tensors[name] = flat.reshape(shape).astype(NATIVE[code])
        else:
            raise CheckpointError(f"{source}: unexpected header line {line!r}")
    digest = meta.get("sha256")
    if digest is not None and digest != hashlib.sha256(payload).hexdigest():
        raise CheckpointError(f"{source}: payload checksum mismatch")
    return tensors, meta


def save(path: Path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> None:
    atomic_write_bytes(path, encode(tensors, meta))


def load(path: Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode(path.read_bytes(), source=str(path))

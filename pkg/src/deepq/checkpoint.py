"""Binary checkpoint format.

Layout: magic ``CYRL``, little-endian u32 format version, a run of
length-prefixed named sections, and a trailing CRC32 over everything that
precedes it. Sections:

* ``config`` -- UTF-8 key=value text (same format as config files)
* ``state``  -- JSON loop state (step counters, RNG states, env state, ...)
* ``params`` / ``target`` -- named parameter tensors, little-endian float32
  with shape headers
* ``optim``  -- optimizer accumulators, same encoding
* ``frames`` -- the preprocessor's frame queue
* ``memory`` -- optional replay memory contents

A flipped byte anywhere after the magic fails the CRC before any section is
parsed, so loads are all-or-nothing.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, dump_config, parse_config_text, resolve_config
from .errors import (ArchitectureMismatchError, CheckpointCRCError,
                     CheckpointError, CheckpointMagicError,
                     CheckpointVersionError)
from .network import Network

MAGIC = b"CYRL"
VERSION = 1

_DTYPE_CODES = {"<f4": 0, "<f8": 1, "<i8": 2, "|u1": 3}
_CODE_DTYPES = {v: np.dtype(k) for k, v in _DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    config: RunConfig
    state: dict
    params: dict[str, np.ndarray]
    target: dict[str, np.ndarray]
    optim: dict[str, np.ndarray]
    frames: np.ndarray
    memory: dict[str, np.ndarray] | None = field(default=None)


def _normalize(arr: np.ndarray) -> np.ndarray:
    a = np.asarray(arr)
    if a.dtype == np.float32:
        return a.astype("<f4", copy=False)
    if a.dtype == np.float64:
        return a.astype("<f8", copy=False)
    if a.dtype == np.bool_ or a.dtype == np.uint8:
        return a.astype("|u1", copy=False)
    if np.issubdtype(a.dtype, np.integer):
        return a.astype("<i8", copy=False)
    raise CheckpointError(f"unsupported array dtype {a.dtype}")


def _encode_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    out = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        a = np.ascontiguousarray(_normalize(arr))
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<BB", _DTYPE_CODES[a.dtype.str], a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape) if a.ndim else b"")
        out.append(a.tobytes())
    return b"".join(out)


def _decode_arrays(buf: bytes) -> dict[str, np.ndarray]:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated array section")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode()
        code, ndim = struct.unpack("<BB", take(2))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape \
            else dtype.itemsize
        data = np.frombuffer(take(nbytes), dtype=dtype)
        arrays[name] = data.reshape(shape).copy()
    return arrays


def _sections_bytes(sections: dict[str, bytes]) -> bytes:
    out = []
    for name, payload in sections.items():
        nb = name.encode()
        out.append(struct.pack("<B", len(nb)))
        out.append(nb)
        out.append(struct.pack("<Q", len(payload)))
        out.append(payload)
    return b"".join(out)


def _parse_sections(buf: bytes) -> dict[str, bytes]:
    sections: dict[str, bytes] = {}
    pos = 0
    while pos < len(buf):
        (nlen,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        (plen,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        if pos + plen > len(buf):
            raise CheckpointError(f"section {name!r} overruns the file")
        sections[name] = buf[pos:pos + plen]
        pos += plen
    return sections


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    sections = {
        "config": dump_config(ckpt.config).encode(),
        "state": json.dumps(ckpt.state, sort_keys=True).encode(),
        "params": _encode_arrays(ckpt.params),
        "target": _encode_arrays(ckpt.target),
        "optim": _encode_arrays(ckpt.optim),
        "frames": _encode_arrays({"frames": ckpt.frames}),
    }
    if ckpt.memory is not None:
        sections["memory"] = _encode_arrays(ckpt.memory)
    body = MAGIC + struct.pack("<I", VERSION) + _sections_bytes(sections)
    blob = body + struct.pack("<I", zlib.crc32(body))
    path = Path(path)
    path.write_bytes(blob)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 8 or not blob.startswith(MAGIC):
        raise CheckpointMagicError(f"{path}: not a checkpoint (bad magic)")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointCRCError(f"{path}: CRC mismatch; file is corrupt")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} unsupported (expected {VERSION})")
    sections = _parse_sections(blob[len(MAGIC) + 4:-4])
    for required in ("config", "state", "params", "target", "optim", "frames"):
        if required not in sections:
            raise CheckpointError(f"{path}: missing section {required!r}")
    config = resolve_config(file_overrides=parse_config_text(
        sections["config"].decode()))
    return Checkpoint(
        config=config,
        state=json.loads(sections["state"].decode()),
        params=_decode_arrays(sections["params"]),
        target=_decode_arrays(sections["target"]),
        optim=_decode_arrays(sections["optim"]),
        frames=_decode_arrays(sections["frames"])["frames"],
        memory=_decode_arrays(sections["memory"]) if "memory" in sections else None,
    )


def load_params_into(net: Network, arrays: dict[str, np.ndarray]) -> None:
    """Copy a saved parameter registry into ``net``, verifying that names and
    shapes line up exactly."""
    current = dict(net.named_tensors())
    missing = sorted(set(current) - set(arrays))
    unexpected = sorted(set(arrays) - set(current))
    if missing or unexpected:
        raise ArchitectureMismatchError(
            f"parameter registry mismatch: missing {missing}, unexpected {unexpected}")
    for name, tensor in current.items():
        src = arrays[name]
        if tuple(src.shape) != tensor.shape:
            raise ArchitectureMismatchError(
                f"{name}: checkpoint shape {tuple(src.shape)} != network {tensor.shape}")
        tensor.values[...] = src.astype(net.dtype, copy=False)

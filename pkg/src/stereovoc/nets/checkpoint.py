"""``MHFI1`` checkpoint files.

Layout (little-endian)::

    b"MHFI1\\n"
    u32 config_len, config_len bytes of UTF-8 JSON
        {"kind": "generator"|"discriminator", "config": {...}, "meta": {...}}
    u32 n_params
    n_params x { u16 name_len, name, u8 ndim, ndim x u32 dim, float32 payload }
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from .discriminators import DiscriminatorConfig, DiscriminatorEnsemble, build_discriminator
from .generator import Generator, GeneratorConfig, build_generator

MAGIC = b"MHFI1\n"


def _kind(net) -> str:
    if isinstance(net, Generator):
        return "generator"
    if isinstance(net, DiscriminatorEnsemble):
        return "discriminator"
    raise CheckpointError(f"cannot checkpoint object of type {type(net).__name__}")


def dumps(net, meta: dict | None = None) -> bytes:
    header = json.dumps({"kind": _kind(net), "config": net.config.to_dict(), "meta": meta or {}},
                        sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    params = list(net.named_parameters())
    parts.append(struct.pack("<I", len(params)))
    for name, p in params:
        raw = name.encode()
        arr = p.detach().cpu().numpy().astype("<f4")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(net, path, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(net, meta))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob, self.pos, self.path = blob, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_header(path) -> dict:
    """Parse only the config block (kind, config, meta)."""
    return _parse(Path(path))[0]


def _parse(path: Path):
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    r = _Reader(blob, path)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic/version {magic!r}, expected {MAGIC!r}")
    (hlen,) = r.unpack("<I", "config length")
    try:
        header = json.loads(r.take(hlen, "config block").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: config block is not valid JSON ({exc})") from exc
    (count,) = r.unpack("<I", "parameter count")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "parameter name length")
        name = r.take(nlen, "parameter name").decode()
        (ndim,) = r.unpack("<B", f"rank of {name}")
        shape = r.unpack(f"<{ndim}I", f"shape of {name}") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        payload = r.take(4 * n, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape)
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.pos} trailing bytes after parameter table")
    return header, tensors


def load_checkpoint(path, dtype=torch.float32):
    """Rebuild the network described by the config block and load its weights.

    Returns ``(net, meta)``.
    """
    path = Path(path)
    header, tensors = _parse(path)
    kind = header.get("kind")
    try:
        if kind == "generator":
            net = build_generator(GeneratorConfig.from_dict(header["config"]), dtype=dtype)
        elif kind == "discriminator":
            net = build_discriminator(DiscriminatorConfig.from_dict(header["config"]), dtype=dtype)
        else:
            raise CheckpointError(f"{path}: unknown network kind {kind!r}")
    except (TypeError, KeyError) as exc:
        raise CheckpointError(f"{path}: config block does not describe a {kind}: {exc}") from exc
    expected = dict(net.named_parameters())
    unknown = sorted(set(tensors) - set(expected))
    if unknown:
        raise CheckpointError(f"{path}: unknown parameter(s) in file: {', '.join(unknown)}")
    missing = sorted(set(expected) - set(tensors))
    if missing:
        raise CheckpointError(f"{path}: parameter(s) missing from file: {', '.join(missing)}")
    with torch.no_grad():
        for name, p in expected.items():
            arr = tensors[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(f"{path}: shape mismatch for {name}: file {tuple(arr.shape)}, "
                                      f"architecture {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr.astype(np.float32)).to(dtype))
    net.eval()
    return net, header.get("meta", {})

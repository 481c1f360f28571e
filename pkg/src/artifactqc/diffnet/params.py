"""Named parameter tensors with gradients, optimizer state and checkpoint I/O.

Checkpoints use the "MQCP" container: magic, u16 version, then per tensor
(u16 name length, utf-8 name, u8 rank, u32 dims, f64 data), little-endian.
Only parameter values are stored; gradients and moments reset on load.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import (
    BadMagic,
    ShapeMismatch,
    TruncatedFile,
    VersionUnsupported,
)

MAGIC = b"MQCP"
VERSION = 1


@dataclass
class _Slot:
    value: np.ndarray
    grad: np.ndarray
    m1: np.ndarray  # first-moment accumulator
    m2: np.ndarray  # second-moment accumulator


class ParamStore:
    """Ordered mapping of parameter name -> float64 tensor plus training state."""

    def __init__(self) -> None:
        self._slots: dict[str, _Slot] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._slots:
            raise ValueError(f"parameter {name!r} already declared")
        v = np.array(value, dtype=np.float64)
        self._slots[name] = _Slot(
            value=v, grad=np.zeros_like(v), m1=np.zeros_like(v), m2=np.zeros_like(v)
        )
        return v

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def __len__(self) -> int:
        return len(self._slots)

    def names(self) -> list[str]:
        return list(self._slots)

    def value(self, name: str) -> np.ndarray:
        return self._slots[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._slots[name].grad

    def accumulate_grad(self, name: str, grad: np.ndarray) -> None:
        slot = self._slots[name]
        if grad.shape != slot.value.shape:
            raise ShapeMismatch(
                f"gradient for {name!r} has shape {grad.shape}, parameter {slot.value.shape}"
            )
        slot.grad += grad

    def zero_grads(self) -> None:
        for slot in self._slots.values():
            slot.grad.fill(0.0)

    def n_scalars(self) -> int:
        return sum(slot.value.size for slot in self._slots.values())

    def _slots_items(self):
        return self._slots.items()

    def save(self, path: str | os.PathLike) -> None:
        chunks = [MAGIC, struct.pack("<H", VERSION)]
        for name, slot in self._slots.items():
            raw = name.encode("utf-8")
            v = np.asarray(slot.value, dtype="<f8")
            if v.ndim and not v.flags["C_CONTIGUOUS"]:
                v = np.ascontiguousarray(v)  # keeps 0-d arrays 0-d
            chunks.append(struct.pack("<H", len(raw)))
            chunks.append(raw)
            chunks.append(struct.pack("<B", v.ndim))
            chunks.append(struct.pack(f"<{v.ndim}I", *v.shape))
            chunks.append(v.tobytes())
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ParamStore":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 4 or blob[:4] != MAGIC:
            raise BadMagic(f"{path}: not an MQCP checkpoint")
        if len(blob) < 6:
            raise TruncatedFile(f"{path}: header truncated")
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != VERSION:
            raise VersionUnsupported(f"{path}: version {version}, supported {VERSION}")
        store = cls()
        offset = 6
        while offset < len(blob):
            if offset + 2 > len(blob):
                raise TruncatedFile(f"{path}: tensor record truncated")
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            if offset + 1 > len(blob):
                raise TruncatedFile(f"{path}: rank truncated for {name!r}")
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            if offset + 4 * rank > len(blob):
                raise TruncatedFile(f"{path}: dims truncated for {name!r}")
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            if offset + 8 * n > len(blob):
                raise TruncatedFile(f"{path}: data truncated for {name!r}")
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(dims)
            offset += 8 * n
            store.add(name, data.copy())
        return store


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """He-style uniform init for layers feeding (leaky-)relu activations."""
    limit = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-limit, limit, shape)

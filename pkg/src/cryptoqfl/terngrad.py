"""Ternary gradient quantization with cyclic wrapping, plus the sparse wire format.

Wire layout (little-endian)::

    magic u32 = 0x54475144 | version u8 = 1 | param_count u32 | scale f32 |
    entry_count u32 | entry_count x u32

Each entry packs the parameter index in bits 0-30 and the sign in bit 31
(set = negative). A message is ``17 + 4 * entry_count`` bytes long.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = 0x54475144
VERSION = 1
HEADER = struct.Struct("<IBIfI")
HEADER_BYTES = HEADER.size  # 17
ENTRY_BYTES = 4
_SIGN = 1 << 31


class WireFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TernaryUpdate:
    scale: float
    indices: tuple[int, ...]
    signs: tuple[int, ...]
    param_count: int

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        # the wire carries f32; keep the in-memory value identical to it
        object.__setattr__(self, "scale", float(np.float32(self.scale)))
        if len(self.indices) != len(self.signs):
            raise ValueError("indices and signs differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and not (0 <= self.indices[0] and self.indices[-1] < self.param_count):
            raise ValueError("index out of range")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be -1 or +1")
        if self.indices and not self.scale > 0:
            raise ValueError("non-empty update needs a positive scale")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def dense(self) -> np.ndarray:
        """Ternary digits as an int vector of length ``param_count``."""
        t = np.zeros(self.param_count, dtype=np.int64)
        t[list(self.indices)] = self.signs
        return t

    def values(self) -> np.ndarray:
        return self.scale * self.dense().astype(float)

    @classmethod
    def from_dense(cls, digits, scale: float) -> TernaryUpdate:
        digits = np.asarray(digits, dtype=np.int64)
        nz = np.flatnonzero(digits)
        return cls(float(scale), tuple(nz), tuple(digits[nz]), digits.size)


def cyclic_wrap(g, period):
    """Map every entry into ``[-period/2, period/2)``.

    ``period`` may be a scalar or one period per entry.
    """
    g = np.asarray(g, dtype=float)
    period = np.broadcast_to(np.asarray(period, dtype=float), g.shape)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite entries")
    if np.any(period <= 0):
        raise ValueError("period must be positive")
    half = period / 2
    out = np.mod(g + half, period) - half
    # float rounding in mod can land exactly on +period/2
    out = np.where(out >= half, out - period, out)
    # entries already in range pass through bit-exactly
    return np.where((g >= -half) & (g < half), g, out)


def ternarize(g, rng: np.random.Generator, scale: float | None = None) -> TernaryUpdate:
    """Unbiased stochastic ternarization: ``E[scale * t_i] = g_i``.

    ``scale`` defaults to ``max|g|``. When a common scale is imposed, entries
    larger than it are clipped to +-scale first (the estimate is unbiased only
    for ``|g_i| <= scale``).
    """
    g = np.asarray(g, dtype=float)
    if g.size == 0:
        raise ValueError("cannot ternarize an empty gradient")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite entries")
    s = float(np.float32(np.max(np.abs(g)) if scale is None else scale))
    # one uniform per coordinate, always drawn, so the stream is shape-stable
    u = rng.random(g.size)
    if s <= 0:
        return TernaryUpdate(0.0, (), (), g.size)
    p = np.minimum(np.abs(g) / s, 1.0)
    digits = np.where(u < p, np.sign(g), 0).astype(np.int64)
    return TernaryUpdate.from_dense(digits, s)


def dequantize(sum_digits, scale: float, n_clients: int) -> np.ndarray:
    """Average gradient ``scale * sum / N`` from an integer digit sum."""
    if n_clients < 1:
        raise ValueError("need at least one client")
    return scale * np.asarray(sum_digits, dtype=np.int64) / n_clients


def serialize(update: TernaryUpdate) -> bytes:
    out = bytearray(HEADER.pack(MAGIC, VERSION, update.param_count, update.scale, update.nnz))
    for i, s in zip(update.indices, update.signs):
        if i >= _SIGN:
            raise WireFormatError(f"index {i} does not fit in 31 bits")
        out += struct.pack("<I", i | (_SIGN if s < 0 else 0))
    return bytes(out)


def deserialize(data: bytes) -> TernaryUpdate:
    if len(data) < HEADER_BYTES:
        raise WireFormatError("truncated header")
    magic, version, count, scale, nnz = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic:#x}")
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version}")
    if len(data) != HEADER_BYTES + ENTRY_BYTES * nnz:
        raise WireFormatError(f"expected {HEADER_BYTES + ENTRY_BYTES * nnz} bytes, got {len(data)}")
    words = struct.unpack_from(f"<{nnz}I", data, HEADER_BYTES)
    indices = tuple(w & (_SIGN - 1) for w in words)
    signs = tuple(-1 if w & _SIGN else 1 for w in words)
    return TernaryUpdate(scale, indices, signs, count)


def wire_size(nnz: int) -> int:
    return HEADER_BYTES + ENTRY_BYTES * nnz

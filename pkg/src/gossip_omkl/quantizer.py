"""Randomized level quantization of vectors and its wire encoding.

Each element of a nonzero vector ``v`` is represented by the shared norm
``||v||``, a sign bit, and a stochastically rounded level in ``0 .. M``::

    Q(v)_i = ||v|| * sign(v_i) * level_i / M

where ``level_i`` is ``floor(M |v_i| / ||v||)`` or that plus one, chosen so
that the decoded vector is unbiased. The wire payload is the norm as a
little-endian float64 followed by ``n`` fields of ``1 + b`` bits (sign bit,
then ``b`` level bits, most significant first) packed into bytes.

Several vectors can be sent in one message by concatenating their payloads;
the ``*_rows`` helpers do that for a ``(k, n)`` block.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

_NORM_BYTES = 8


def compression_delta(n_components: int, levels: int) -> float:
    """Compression parameter ``1 - min(2D / M^2, sqrt(2D) / M)``.

    ``n_components`` is ``D``, the number of random features; the quantized
    vectors have length ``2D``. The value may be nonpositive, in which case
    the quantizer does not satisfy the contraction property.
    """
    if n_components < 1 or levels < 1:
        raise ValueError("n_components and levels must be positive")
    return _delta_for_length(2 * n_components, levels)


def _delta_for_length(n: int, levels: int) -> float:
    return 1.0 - min(n / levels**2, math.sqrt(n) / levels)


def level_bits(levels: int) -> int:
    """Bits needed for a level field holding ``0 .. levels``."""
    return max(1, math.ceil(math.log2(levels + 1)))


def _same_float(a, b):
    return struct.pack("<d", a) == struct.pack("<d", b)


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    """One quantized vector. ``signs`` is True for negative elements."""

    norm: float
    signs: np.ndarray
    levels: np.ndarray
    max_level: int

    def __eq__(self, other):
        if not isinstance(other, QuantizedVector):
            return NotImplemented
        return (
            self.max_level == other.max_level
            and _same_float(self.norm, other.norm)
            and np.array_equal(self.signs, other.signs)
            and np.array_equal(self.levels, other.levels)
        )

    __hash__ = None

    @property
    def dimension(self) -> int:
        return len(self.levels)


@dataclass(frozen=True, eq=False)
class RawVector:
    """Unquantized payload carried by :class:`IdentityQuantizer`."""

    values: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RawVector):
            return NotImplemented
        return self.values.tobytes() == other.values.tobytes()

    __hash__ = None

    @property
    def dimension(self) -> int:
        return len(self.values)


def quantize_rows(V, levels: int, rngs):
    """Quantize each row of ``V`` with its own random stream.

    Returns ``(norms, signs, levels)`` with shapes ``(k,)``, ``(k, n)``,
    ``(k, n)``. All-zero rows map to norm 0 with every level and sign 0.
    """
    V = np.asarray(V, dtype=float)
    if not np.all(np.isfinite(V)):
        raise ValueError("cannot quantize a vector with NaN or infinite entries")
    k, n = V.shape
    with np.errstate(over="ignore", under="ignore"):
        norms = np.sqrt(np.sum(V * V, axis=1))
    # rescale rows whose squares under- or overflow
    peak = np.abs(V).max(axis=1, initial=0.0)
    extreme = (peak > 0.0) & ((peak < 1e-150) | (peak > 1e150))
    if extreme.any():
        W = V[extreme] / peak[extreme, None]
        norms[extreme] = peak[extreme] * np.sqrt(np.sum(W * W, axis=1))
    u = np.stack([rng.random(n) for rng in rngs])
    safe = np.where(norms > 0.0, norms, 1.0)
    scaled = np.clip(levels * np.abs(V) / safe[:, None], 0.0, levels)
    lower = np.floor(scaled)
    # upper level with probability equal to the fractional part
    lv = (lower + (u < scaled - lower)).astype(np.int64)
    signs = np.signbit(V)
    zero = norms == 0.0
    if zero.any():
        lv[zero] = 0
        signs[zero] = False
    return norms, signs, lv


def dequantize_rows(norms, signs, levels, max_level: int) -> np.ndarray:
    levels = np.asarray(levels)
    if levels.size and (levels.max() > max_level or levels.min() < 0):
        raise ValueError(f"corrupt payload: level outside [0, {max_level}]")
    magnitude = np.asarray(norms, dtype=float)[..., None] * (levels / max_level)
    return np.where(signs, -magnitude, magnitude)


def payload_size(dimension: int, bits: int) -> int:
    return _NORM_BYTES + math.ceil(dimension * (1 + bits) / 8)


def pack_rows(norms, signs, levels, bits: int) -> bytes:
    """Concatenate the wire payloads of ``k`` quantized rows."""
    levels = np.asarray(levels, dtype=np.int64)
    if levels.size and (levels.max() >= (1 << bits) or levels.min() < 0):
        raise ValueError(f"levels do not fit in {bits} bits")
    k, n = levels.shape
    body = math.ceil(n * (1 + bits) / 8)
    fields = np.zeros((k, n, 1 + bits), dtype=np.uint8)
    fields[:, :, 0] = np.asarray(signs, dtype=bool)
    shifts = np.arange(bits - 1, -1, -1)
    fields[:, :, 1:] = (levels[:, :, None] >> shifts) & 1
    flat = np.zeros((k, body * 8), dtype=np.uint8)
    flat[:, : n * (1 + bits)] = fields.reshape(k, -1)
    head = np.asarray(norms, dtype="<f8").reshape(k, 1).view(np.uint8)
    return np.hstack([head, np.packbits(flat, axis=1)]).tobytes()


def unpack_rows(buf: bytes, count: int, dimension: int, bits: int):
    """Inverse of :func:`pack_rows`; returns ``(norms, signs, levels)``."""
    size = payload_size(dimension, bits)
    expected = size * count
    if len(buf) < expected:
        raise ValueError(f"truncated payload: expected {expected} bytes, got {len(buf)}")
    if len(buf) > expected:
        raise ValueError(f"payload too long: expected {expected} bytes, got {len(buf)}")
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(count, size)
    norms = raw[:, :_NORM_BYTES].copy().view("<f8").reshape(count).astype(float)
    n_bits = dimension * (1 + bits)
    fields = np.unpackbits(raw[:, _NORM_BYTES:], axis=1)[:, :n_bits]
    fields = fields.reshape(count, dimension, 1 + bits).astype(np.int64)
    weights = 1 << np.arange(bits - 1, -1, -1)
    return norms, fields[:, :, 0].astype(bool), fields[:, :, 1:] @ weights


class LevelQuantizer:
    """Stochastic quantizer with ``levels`` quantization levels.

    Parameters
    ----------
    levels : int
        ``M``, the largest level. ``M = 2**b - 1`` uses every code of the
        ``b``-bit level field; other values are accepted and use
        ``b = ceil(log2(M + 1))`` bits.
    dimension : int
        Length ``n`` of the vectors to quantize.

    Raises
    ------
    ValueError
        If the compression parameter for ``(dimension, levels)`` is not
        positive.
    """

    def __init__(self, levels: int, dimension: int):
        levels = int(levels)
        dimension = int(dimension)
        if levels < 1:
            raise ValueError(f"levels must be positive, got {levels}")
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.levels = levels
        self.dimension = dimension
        self.bits = level_bits(levels)
        self.delta = _delta_for_length(dimension, levels)
        if not self.delta > 0.0:
            raise ValueError(
                f"{levels} levels are too coarse for dimension {dimension}: "
                f"compression parameter {self.delta:.4g} <= 0"
            )

    def __repr__(self):
        return f"LevelQuantizer(levels={self.levels}, dimension={self.dimension})"

    @property
    def payload_bytes(self) -> int:
        return payload_size(self.dimension, self.bits)

    def _check(self, V):
        V = np.asarray(V, dtype=float)
        if V.shape[-1] != self.dimension:
            raise ValueError(f"expected vectors of length {self.dimension}, got shape {V.shape}")
        return V

    def quantize(self, v, rng: np.random.Generator) -> QuantizedVector:
        v = self._check(v)
        if v.ndim != 1:
            raise ValueError("quantize takes a single vector; use compress for blocks")
        norms, signs, lv = quantize_rows(v[None, :], self.levels, [rng])
        return QuantizedVector(float(norms[0]), signs[0], lv[0], self.levels)

    def dequantize(self, q: QuantizedVector) -> np.ndarray:
        return dequantize(q)

    def encode(self, q: QuantizedVector) -> bytes:
        if q.max_level != self.levels or q.dimension != self.dimension:
            raise ValueError("quantized vector does not match this quantizer")
        return encode_wire(q, self.bits)

    def decode(self, buf: bytes) -> QuantizedVector:
        return decode_wire(buf, self.dimension, self.levels)

    def compress(self, V, rngs) -> bytes:
        """Quantize the rows of ``V`` (one stream per row) into one message."""
        V = self._check(V)
        norms, signs, lv = quantize_rows(V, self.levels, rngs)
        return pack_rows(norms, signs, lv, self.bits)

    def expand(self, message: bytes, count: int) -> np.ndarray:
        """Decode a ``count``-row message back to a ``(count, n)`` array."""
        norms, signs, lv = unpack_rows(message, count, self.dimension, self.bits)
        return dequantize_rows(norms, signs, lv, self.levels)


class IdentityQuantizer:
    """No-op compressor: sends every element as a float64 (``delta = 1``)."""

    levels = None
    delta = 1.0

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = int(dimension)

    def __repr__(self):
        return f"IdentityQuantizer(dimension={self.dimension})"

    @property
    def payload_bytes(self) -> int:
        return 8 * self.dimension

    def _check(self, V):
        V = np.array(V, dtype=float)
        if V.shape[-1] != self.dimension:
            raise ValueError(f"expected vectors of length {self.dimension}, got shape {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("cannot quantize a vector with NaN or infinite entries")
        return V

    def quantize(self, v, rng=None) -> RawVector:
        return RawVector(self._check(v))

    def dequantize(self, q: RawVector) -> np.ndarray:
        return q.values.copy()

    def encode(self, q: RawVector) -> bytes:
        return q.values.astype("<f8").tobytes()

    def decode(self, buf: bytes) -> RawVector:
        return RawVector(self.expand(buf, 1)[0])

    def compress(self, V, rngs=None) -> bytes:
        return self._check(V).astype("<f8").tobytes()

    def expand(self, message: bytes, count: int) -> np.ndarray:
        expected = self.payload_bytes * count
        if len(message) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(message)}")
        return np.frombuffer(message, dtype="<f8").reshape(count, self.dimension).astype(float)


def make_quantizer(levels, dimension: int):
    """``LevelQuantizer`` for an integer level count, identity for ``None``."""
    if levels is None:
        return IdentityQuantizer(dimension)
    return LevelQuantizer(levels, dimension)


def quantize(v, quantizer: LevelQuantizer, rng: np.random.Generator) -> QuantizedVector:
    return quantizer.quantize(v, rng)


def dequantize(q: QuantizedVector) -> np.ndarray:
    """Reconstruct ``norm * sign_i * level_i / M``."""
    return dequantize_rows(q.norm, q.signs, q.levels, q.max_level)


def encode_wire(q: QuantizedVector, bits: int | None = None) -> bytes:
    if bits is None:
        bits = level_bits(q.max_level)
    return pack_rows([q.norm], np.asarray(q.signs)[None, :], np.asarray(q.levels)[None, :], bits)


def decode_wire(buf: bytes, dimension: int, levels: int) -> QuantizedVector:
    """Inverse of :func:`encode_wire` for a ``dimension``-vector with ``levels``."""
    norms, signs, lv = unpack_rows(buf, 1, dimension, level_bits(levels))
    return QuantizedVector(float(norms[0]), signs[0], lv[0], levels)

"""Sparse ternary gradient wire format.

Layout of a serialized message::

    offset 0   uint32 LE   dim           framing, not counted in payload
    offset 4   float32 LE  scale         32 payload bits
    offset 8   bit stream  indicator     dim bits
                           codes         2 bits per selected coordinate

The bit stream is LSB-first: stream bit ``j`` is bit ``j % 8`` of byte
``8 + j // 8``. Coordinate ``d`` of the indicator is stream bit ``d``; the
``n``-th selected code occupies stream bits ``dim + 2n`` (low) and
``dim + 2n + 1`` (high). Codes are ``00 -> 0``, ``01 -> +1``, ``10 -> -1``;
``11`` is rejected. Trailing pad bits of the last byte are zero.

The payload (everything after the dim field, before padding) is therefore
exactly ``32 + dim + 2k`` bits for ``k`` selected coordinates.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .quantize import TernaryGradient

__all__ = [
    "CodecError",
    "IndicatorBitmap",
    "GradientMessage",
    "encode",
    "decode",
    "indicator_or",
    "payload_bits",
    "dense_ternary_bits",
    "dense_float_bits",
    "SCALE_BITS",
    "HEADER_BYTES",
]

SCALE_BITS = 32
HEADER_BYTES = 8
_HEADER = struct.Struct("<If")

# 2-bit wire value for code -1, 0, +1 (indexed by code + 1) and back
_CODE_TO_WIRE = np.array([2, 0, 1], dtype=np.uint8)
_WIRE_TO_CODE = np.array([0, 1, -1, 0], dtype=np.int8)
_CORRUPT = 3


class CodecError(ValueError):
    pass


def _pack(bits):
    return np.packbits(bits.astype(np.uint8), bitorder="little").tobytes()


def _unpack(buf, nbits):
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
    return bits[:nbits].astype(bool), bits[nbits:]


@dataclass(frozen=True, eq=False)
class IndicatorBitmap:
    """Per-coordinate selection mask."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("indicator must be a non-empty 1-d mask")
        object.__setattr__(self, "bits", bits)

    @property
    def dim(self):
        return self.bits.size

    @property
    def count(self):
        return int(np.count_nonzero(self.bits))

    @property
    def indices(self):
        return np.flatnonzero(self.bits)

    def to_bytes(self):
        return _pack(self.bits)

    @classmethod
    def from_bytes(cls, buf, dim):
        if len(buf) != (dim + 7) // 8:
            raise CodecError("truncated message")
        bits, pad = _unpack(buf, dim)
        if pad.any():
            raise CodecError("nonzero pad bits in indicator")
        return cls(bits)

    @classmethod
    def full(cls, dim):
        return cls(np.ones(dim, dtype=bool))

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros(dim, dtype=bool))

    def __eq__(self, other):
        return isinstance(other, IndicatorBitmap) and np.array_equal(self.bits, other.bits)

    def __or__(self, other):
        return indicator_or(self, other)


def indicator_or(a, b):
    if a.dim != b.dim:
        raise ValueError(f"indicator dimension mismatch: {a.dim} != {b.dim}")
    return IndicatorBitmap(a.bits | b.bits)


@dataclass(frozen=True, eq=False)
class GradientMessage:
    """A selected-coordinate ternary gradient as it travels on the wire.

    ``wire_codes`` holds the raw 2-bit values (0..3) of the selected
    coordinates in ascending coordinate order; validation against the
    reserved value 3 happens in :func:`decode`.
    """

    dim: int
    scale: np.float32
    indicator: IndicatorBitmap
    wire_codes: np.ndarray

    def __post_init__(self):
        if self.indicator.dim != self.dim:
            raise ValueError("indicator dimension does not match message dimension")
        object.__setattr__(self, "scale", np.float32(self.scale))
        object.__setattr__(self, "wire_codes", np.asarray(self.wire_codes, dtype=np.uint8))

    @property
    def k(self):
        return self.indicator.count

    def payload_bit_stream(self):
        """Indicator bits followed by code bits, unpadded (``dim + 2k`` entries)."""
        codes = self.wire_codes
        code_bits = np.empty(2 * codes.size, dtype=np.uint8)
        code_bits[0::2] = codes & 1
        code_bits[1::2] = codes >> 1
        return np.concatenate([self.indicator.bits.astype(np.uint8), code_bits])

    def to_bytes(self):
        if self.wire_codes.size != self.k:
            raise CodecError("truncated message")
        return _HEADER.pack(self.dim, self.scale) + _pack(self.payload_bit_stream())

    @classmethod
    def from_bytes(cls, buf):
        buf = bytes(buf)
        if len(buf) < HEADER_BYTES:
            raise CodecError("truncated message")
        dim, scale = _HEADER.unpack_from(buf)
        if dim == 0:
            raise CodecError("zero-dimensional message")
        body = buf[HEADER_BYTES:]
        if len(body) < (dim + 7) // 8:
            raise CodecError("truncated message")
        stream = np.unpackbits(np.frombuffer(body, dtype=np.uint8), bitorder="little")
        indicator = IndicatorBitmap(stream[:dim].astype(bool))
        k = indicator.count
        nbits = dim + 2 * k
        if len(body) != (nbits + 7) // 8:
            raise CodecError("truncated message")
        if stream[nbits:].any():
            raise CodecError("nonzero pad bits")
        code_bits = stream[dim:nbits]
        wire = code_bits[0::2] | (code_bits[1::2] << 1)
        return cls(dim, np.float32(scale), indicator, wire)


def encode(q, indicator):
    """Pack the codes of ``q`` at the coordinates selected by ``indicator``.

    Codes at unselected coordinates are dropped; a selected coordinate whose
    code is 0 is still sent (as ``00``).
    """
    if q.dim != indicator.dim:
        raise ValueError(f"dimension mismatch: gradient {q.dim}, indicator {indicator.dim}")
    selected = q.codes[indicator.bits]
    return GradientMessage(q.dim, np.float32(q.scale), indicator, _CODE_TO_WIRE[selected + 1])


def decode(msg):
    """Expand a message (object or raw bytes) to a dense :class:`TernaryGradient`."""
    if isinstance(msg, (bytes, bytearray, memoryview)):
        msg = GradientMessage.from_bytes(msg)
    wire = msg.wire_codes
    if wire.size != msg.k:
        raise CodecError("truncated message")
    if np.any(wire == _CORRUPT):
        raise CodecError("corrupt code")
    codes = np.zeros(msg.dim, dtype=np.int8)
    codes[msg.indicator.bits] = _WIRE_TO_CODE[wire]
    scale = float(msg.scale)
    if not np.isfinite(scale) or scale < 0:
        raise CodecError(f"invalid scale {scale}")
    return TernaryGradient(scale, codes)


def payload_bits(msg):
    """``32 + dim + 2k``: scaler, indicator and selected codes."""
    return SCALE_BITS + msg.dim + 2 * msg.k


def dense_ternary_bits(dim):
    """Cost of a dense ternary message without an indicator, ``32 + 2d``."""
    return SCALE_BITS + 2 * dim


def dense_float_bits(dim):
    """Cost of an uncompressed float32 gradient, ``32 d``."""
    return 32 * dim

"""Norm/sign/level-index vector quantization and its wire format.

A quantized vector is the triple (l2 norm, one sign bit per element, one
level index per element); the element value is reconstructed as
``norm * sign * level``. The wire layout is big-endian: a 32-bit float
norm, then the sign bits packed MSB-first, then the indices packed at
``ceil(log2(levels))`` bits each, zero-padded to a byte boundary.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import CorruptPayloadError
from .codebook import LevelTable
from .stochastic import stochastic_round_indices

__all__ = [
    "QuantizerKind",
    "QuantizedVector",
    "encoded_bits",
    "quantize_vector",
    "dequantize",
    "pack_payload",
    "unpack_payload",
    "pack_codebook",
    "unpack_codebook",
    "qsgd_level_table",
    "natural_level_table",
]

KINDS = ("lloyd_max", "qsgd", "natural", "alq", "lossless")

# bookkeeping stand-in for "one float32 per element"; only affects accounting
LOSSLESS_LEVEL_COUNT = 2**32


@dataclass(frozen=True)
class QuantizerKind:
    """Quantizer family plus its parameters.

    ``s`` follows each family's own convention: the number of fitted
    levels for ``lloyd_max``, the number of uniform intervals for
    ``qsgd``, the number of power-of-two levels below one for
    ``natural``, and the number of adjustable interior levels for
    ``alq``. ``lossless`` ignores ``s``.
    """

    name: str
    s: int = 16
    fit_tol: float = 1e-6
    fit_max_iter: int = 100

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValueError(f"unknown quantizer kind {self.name!r}; expected one of {KINDS}")
        if self.name != "lossless" and self.s < 1:
            raise ValueError("s must be >= 1")

    @property
    def level_count(self):
        """Number of representable scalar values, as carried by payloads."""
        if self.name == "lloyd_max":
            return self.s
        if self.name == "qsgd":
            return self.s + 1
        if self.name == "natural":
            return self.s + 1
        if self.name == "alq":
            return self.s + 2
        return LOSSLESS_LEVEL_COUNT


@dataclass(frozen=True)
class QuantizedVector:
    """Wire-format triple (norm, signs, level indices) for one vector.

    ``signs`` is boolean with True meaning negative. A zero norm encodes
    the zero vector regardless of indices. Lossless payloads keep the
    exact normalized magnitudes instead of level indices.
    """

    norm: float
    signs: np.ndarray
    indices: np.ndarray
    level_count: int
    codebook_id: str | None = None
    exact_magnitudes: np.ndarray | None = None

    def __post_init__(self):
        if self.signs.shape != self.indices.shape:
            raise CorruptPayloadError("signs and indices must have equal length")
        if self.norm < 0 or not math.isfinite(self.norm):
            raise CorruptPayloadError("norm must be finite and nonnegative")

    @property
    def d(self):
        return self.signs.size


def encoded_bits(d, s):
    """Bits to encode one quantized vector: norm + signs + packed indices."""
    if d < 1 or s < 1:
        raise ValueError("d and s must be >= 1")
    return d * _index_bits(s) + d + 32


def _index_bits(level_count):
    return max(int(level_count - 1).bit_length(), 0)


def qsgd_level_table(s):
    """The uniform ladder 0, 1/s, ..., 1 as a level table."""
    return LevelTable.from_levels(np.linspace(0.0, 1.0, s + 1))


def natural_level_table(s):
    """The power-of-two ladder 0, 2^(1-s), ..., 1/2, 1 as a level table."""
    return LevelTable.from_levels(np.concatenate(([0.0], np.ldexp(1.0, np.arange(1 - s, 1)))))


def quantize_vector(v, kind, table=None, rng=None):
    """Quantize a real vector under the given quantizer family.

    The norm is kept at full precision; each element contributes its sign
    (zero counts as positive) and the index its normalized magnitude maps
    to. Table-based kinds require ``table``; stochastic kinds require
    ``rng``. A zero vector encodes as norm 0 with all indices 0.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 1:
        raise ValueError("vector must have at least one element")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector elements must be finite")
    kind = _as_kind(kind)
    if kind.name in ("lloyd_max", "alq") and table is None:
        raise ValueError(f"{kind.name} quantization requires a fitted level table")
    if kind.name in ("qsgd", "natural", "alq") and rng is None:
        raise ValueError(f"{kind.name} quantization requires a random generator")

    signs = np.signbit(v) & (v != 0.0)
    norm = float(np.linalg.norm(v))
    level_count = table.s if kind.name in ("lloyd_max", "alq") and table is not None else kind.level_count
    if norm == 0.0:
        indices = np.zeros(v.size, dtype=np.int64)
        exact = np.zeros(v.size) if kind.name == "lossless" else None
        return QuantizedVector(0.0, signs, indices, level_count,
                               codebook_id=_table_id(kind, table), exact_magnitudes=exact)

    r = np.abs(v) / norm
    np.clip(r, 0.0, 1.0, out=r)
    if kind.name == "lloyd_max":
        indices = table.assign(r)
    elif kind.name == "alq":
        indices = stochastic_round_indices(r, table.levels, rng)
    elif kind.name == "qsgd":
        indices = stochastic_round_indices(r, qsgd_level_table(kind.s).levels, rng)
    elif kind.name == "natural":
        indices = stochastic_round_indices(r, natural_level_table(kind.s).levels, rng)
    else:
        return QuantizedVector(norm, signs, np.zeros(v.size, dtype=np.int64), level_count,
                               exact_magnitudes=r.copy())
    return QuantizedVector(norm, signs, indices, level_count, codebook_id=_table_id(kind, table))


def _as_kind(kind):
    if isinstance(kind, QuantizerKind):
        return kind
    return QuantizerKind(kind)


def _table_id(kind, table):
    if kind.name in ("lloyd_max", "alq") and table is not None:
        return table.table_id
    return None


def dequantize(q, table=None):
    """Reconstruct the real vector from a payload and its codebook.

    For index payloads each element is ``norm * sign * levels[index]``;
    a zero norm reconstructs the zero vector.
    """
    sign = np.where(q.signs, -1.0, 1.0)
    if q.exact_magnitudes is not None:
        return q.norm * sign * q.exact_magnitudes
    if table is None:
        raise ValueError("index payloads require the level table used to encode them")
    if q.codebook_id is not None and q.codebook_id != table.table_id:
        raise ValueError("payload codebook_id does not match the supplied table")
    if q.indices.size and int(q.indices.max()) >= table.s:
        raise CorruptPayloadError(f"level index {int(q.indices.max())} out of range for {table.s} levels")
    if q.indices.size and int(q.indices.min()) < 0:
        raise CorruptPayloadError("negative level index")
    if q.norm == 0.0:
        return np.zeros(q.d)
    return q.norm * sign * table.levels[q.indices]


def pack_payload(q):
    """Serialize a payload to bytes (norm, sign bits, packed indices)."""
    if q.exact_magnitudes is not None:
        raise ValueError("lossless payloads have no packed wire format")
    out = bytearray(struct.pack(">f", q.norm))
    bits = np.zeros(q.d, dtype=np.uint8)
    bits[q.signs] = 1
    nbits = _index_bits(q.level_count)
    if nbits:
        shifts = np.arange(nbits - 1, -1, -1, dtype=np.uint64)
        index_bits = ((q.indices.astype(np.uint64)[:, None] >> shifts) & 1).astype(np.uint8).ravel()
        bits = np.concatenate([bits, index_bits])
    out.extend(np.packbits(bits).tobytes())
    return bytes(out)


def unpack_payload(data, d, level_count):
    """Parse bytes produced by ``pack_payload``; the codebook travels separately."""
    nbits = _index_bits(level_count)
    total_bits = d + d * nbits
    expected = 4 + (total_bits + 7) // 8
    if len(data) != expected:
        raise CorruptPayloadError(f"payload is {len(data)} bytes; expected {expected} for d={d}, levels={level_count}")
    norm = struct.unpack(">f", data[:4])[0]
    if not math.isfinite(norm) or norm < 0:
        raise CorruptPayloadError("decoded norm is not a finite nonnegative value")
    bits = np.unpackbits(np.frombuffer(data[4:], dtype=np.uint8), count=total_bits)
    signs = bits[:d].astype(bool)
    if nbits:
        index_bits = bits[d:].reshape(d, nbits).astype(np.uint64)
        weights = np.uint64(1) << np.arange(nbits - 1, -1, -1, dtype=np.uint64)
        indices = (index_bits * weights).sum(axis=1).astype(np.int64)
    else:
        indices = np.zeros(d, dtype=np.int64)
    if indices.size and int(indices.max()) >= level_count:
        raise CorruptPayloadError(f"decoded index {int(indices.max())} out of range for {level_count} levels")
    return QuantizedVector(float(norm), signs, indices, level_count)


def wire_bits(q):
    """Exact number of meaningful bits in the packed payload."""
    return encoded_bits(q.d, q.level_count)


def pack_codebook(table):
    """Sidecar serialization of the levels as big-endian float32."""
    return table.levels.astype(">f4").tobytes()


def unpack_codebook(data):
    levels = np.frombuffer(data, dtype=">f4").astype(np.float64)
    if levels.size < 1:
        raise CorruptPayloadError("empty codebook sidecar")
    return LevelTable.from_levels(levels)

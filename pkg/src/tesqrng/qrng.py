"""Random bits from photon totals via mod-2^d residues.

Each resolved event contributes the natural binary encoding of
(total mod 2^d), most significant bit first; discarded events contribute
nothing. The packed file format is a 16-byte header (magic, version, d,
pad bits, event count) followed by the bit stream packed MSB-first into
bytes, final byte zero-padded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .theory import BiasReport

__all__ = ["BitStream", "bits_from_count", "generate", "empirical_bias", "MAX_D"]

MAX_D = 5  # mirrors the tested moduli 2..32

_MAGIC = b"QRNB"
_VERSION = 1
_HEADER = struct.Struct("<4sBBBxQ")  # magic, version, d, pad_bits, reserved, n_events


class InsufficientDataError(ValueError):
    """Bit stream too short for the requested analysis."""


def _check_d(d: int) -> None:
    if not 1 <= d <= MAX_D:
        raise ValueError(f"d must lie in 1..{MAX_D}, got {d}")


@dataclass(frozen=True)
class BitStream:
    """Packed random bits plus provenance."""

    packed: np.ndarray
    bit_length: int
    d: int
    n_events_used: int
    n_discarded: int
    source_meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        packed = np.asarray(self.packed, dtype=np.uint8)
        object.__setattr__(self, "packed", packed)
        if self.bit_length != self.d * self.n_events_used:
            raise ValueError("bit length must equal d * events used")
        if len(packed) != (self.bit_length + 7) // 8:
            raise ValueError("packed byte count does not match bit length")

    @property
    def bits(self) -> np.ndarray:
        """Unpacked 0/1 array of length bit_length."""
        return np.unpackbits(self.packed)[: self.bit_length]

    @property
    def words(self) -> np.ndarray:
        """Per-event d-bit words as integers."""
        b = self.bits.reshape(self.n_events_used, self.d)
        weights = 1 << np.arange(self.d - 1, -1, -1)
        return b @ weights

    def save(self, path: str | Path) -> None:
        pad = len(self.packed) * 8 - self.bit_length
        header = _HEADER.pack(_MAGIC, _VERSION, self.d, pad, self.n_events_used)
        Path(path).write_bytes(header + self.packed.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "BitStream":
        raw = Path(path).read_bytes()
        magic, version, d, pad, n_events = _HEADER.unpack(raw[: _HEADER.size])
        if magic != _MAGIC:
            raise ValueError(f"not a bitstream file (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"unsupported bitstream version {version}")
        packed = np.frombuffer(raw[_HEADER.size :], dtype=np.uint8)
        bit_length = len(packed) * 8 - pad
        return cls(
            packed=packed,
            bit_length=bit_length,
            d=d,
            n_events_used=n_events,
            n_discarded=0,
            source_meta={"path": str(path)},
        )


def bits_from_count(n: int, d: int) -> tuple[int, ...]:
    """d bits of n mod 2^d, most significant first: 6, d=3 -> (1, 1, 0)."""
    _check_d(d)
    if n < 0:
        raise ValueError("count must be non-negative")
    r = n % (1 << d)
    return tuple((r >> k) & 1 for k in range(d - 1, -1, -1))


def generate(totals: np.ndarray, d: int, source_meta: dict | None = None) -> BitStream:
    """Bit stream from resolved totals in event order; negatives are discards."""
    _check_d(d)
    totals = np.asarray(totals)
    kept = totals[totals >= 0]
    words = (kept % (1 << d)).astype(np.uint8)
    shifts = np.arange(d - 1, -1, -1, dtype=np.uint8)
    bits = ((words[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)
    return BitStream(
        packed=np.packbits(bits),
        bit_length=int(bits.size),
        d=d,
        n_events_used=int(kept.size),
        n_discarded=int(totals.size - kept.size),
        source_meta=source_meta or {},
    )


def empirical_bias(stream: BitStream, q: int) -> BiasReport:
    """Per-residue frequencies of the stream's words mod q, with multinomial SEs.

    Needs at least 100*q words to say anything; the report's max_bias is the
    largest deviation from 1/q.
    """
    if q < 2 or q > (1 << stream.d):
        raise ValueError(f"q must lie in 2..2^d, got {q}")
    words = stream.words
    m = words.size
    if m < 100 * q:
        raise InsufficientDataError(f"need at least {100 * q} words, have {m}")
    counts = np.bincount(words % q, minlength=q)
    freqs = counts / m
    return BiasReport(
        probabilities=freqs,
        max_bias=float(np.abs(freqs - 1.0 / q).max()),
        truncated=True,
        errors=np.sqrt(freqs * (1.0 - freqs) / m),
    )

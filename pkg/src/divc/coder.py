"""Byte-oriented range coder with 16-bit probability precision.

The coder keeps a 32-bit range and a 64-bit ``low`` register whose bit 32
holds a pending carry; carries are resolved through a one-byte cache plus a
run of deferred ``0xFF`` bytes. Renormalisation emits one byte whenever the
range falls below 2**24, so ``range >> 16`` is always at least 256.

Two symbol models share the same stream:

* static frequency tables (cumulative totals of exactly 2**16), used for the
  quantised latents;
* binary symbols with an externally supplied probability of a one, used for
  the sign masks.

>>> table = FrequencyTable.from_frequencies([40000, 25536])
>>> data = encode_symbols([0, 1, 1, 0], table)
>>> decode_symbols(data, 4, table)
[0, 1, 1, 0]
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class CoderError(ValueError):
    pass


class CorruptStreamError(CoderError):
    pass


def quantize_probs(p) -> np.ndarray:
    """Map probabilities onto the 16-bit grid, clamped to ``[1, 65535]``.

    Sender and receiver must both go through this before coding.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.rint(p * PROB_ONE)
    q = np.where(np.isnan(q), PROB_ONE // 2, q)
    return np.clip(q, 1, PROB_ONE - 1).astype(np.int64)


@dataclass(frozen=True)
class FrequencyTable:
    """Integer symbol frequencies summing to 2**16.

    ``offset`` maps symbol indices to values: index ``i`` codes value
    ``offset + i``. When ``escape`` is set the last index is the escape symbol,
    followed in the stream by the raw 32-bit value.
    """

    freqs: tuple[int, ...]
    cum: tuple[int, ...]
    offset: int = 0
    escape: bool = False

    @classmethod
    def from_frequencies(cls, freqs, offset: int = 0, escape: bool = False) -> "FrequencyTable":
        freqs = tuple(int(f) for f in freqs)
        if not freqs or min(freqs) < 1:
            raise CoderError("every symbol needs a frequency >= 1")
        if sum(freqs) != PROB_ONE:
            raise CoderError(f"frequencies must sum to {PROB_ONE}, got {sum(freqs)}")
        cum = [0]
        for f in freqs:
            cum.append(cum[-1] + f)
        return cls(freqs, tuple(cum), int(offset), bool(escape))

    @property
    def n_regular(self) -> int:
        return len(self.freqs) - (1 if self.escape else 0)

    def index_of(self, value: int) -> int | None:
        i = int(value) - self.offset
        return i if 0 <= i < self.n_regular else None

    def entropy_bits(self) -> float:
        p = np.asarray(self.freqs, float) / PROB_ONE
        return float(-(p * np.log2(p)).sum())

    def code_length(self, index: int) -> float:
        return -np.log2(self.freqs[index] / PROB_ONE)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if not self._cache_size:
                    break
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, cum_lo: int, freq: int):
        r = self.range >> PROB_BITS
        self.low += r * cum_lo
        if cum_lo + freq == PROB_ONE:
            # last symbol absorbs the truncation remainder
            self.range -= r * cum_lo
        else:
            self.range = r * freq
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_bit(self, bit: int, p_one: int):
        bound = (self.range >> PROB_BITS) * p_one
        if bit:
            self.range = bound
        else:
            self.low += bound
            self.range -= bound
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_raw(self, value: int, nbits: int = 16):
        """Code ``nbits`` (<= 16) equiprobable bits."""
        step = 1 << (PROB_BITS - nbits)
        self.encode(value * step, step)

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        # the first emitted byte is always the initial zero cache
        return bytes(self._out[1:])


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next()

    def _next(self) -> int:
        if self._pos >= len(self._data):
            raise CorruptStreamError("range decoder read past the end of the stream")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def _normalize(self):
        while self.range < _TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._next()) & _MASK32

    def decode(self, cum: Sequence[int]) -> int:
        r = self.range >> PROB_BITS
        target = min(self.code // r, PROB_ONE - 1)
        s = bisect.bisect_right(cum, target) - 1
        lo, hi = cum[s], cum[s + 1]
        self.code -= r * lo
        if hi == PROB_ONE:
            self.range -= r * lo
        else:
            self.range = r * (hi - lo)
        if self.code < 0 or self.code >= self.range:
            raise CorruptStreamError("range decoder lost synchronisation")
        self._normalize()
        return s

    def decode_bit(self, p_one: int) -> int:
        bound = (self.range >> PROB_BITS) * p_one
        if self.code < bound:
            self.range = bound
            bit = 1
        else:
            self.code -= bound
            self.range -= bound
            bit = 0
        self._normalize()
        return bit

    def decode_raw(self, nbits: int = 16) -> int:
        step = 1 << (PROB_BITS - nbits)
        r = self.range >> PROB_BITS
        value = min(self.code // r, PROB_ONE - 1) // step
        self.code -= r * value * step
        if (value + 1) * step == PROB_ONE:
            self.range -= r * value * step
        else:
            self.range = r * step
        self._normalize()
        return value

    @property
    def consumed(self) -> int:
        return self._pos


def _tables_for(table, n: int) -> list:
    if isinstance(table, FrequencyTable):
        return [table] * n
    tables = list(table)
    if len(tables) != n:
        raise CoderError(f"got {len(tables)} tables for {n} symbols")
    return tables


def write_symbol(enc: RangeEncoder, value: int, table: FrequencyTable):
    i = table.index_of(value)
    if i is None:
        if not table.escape:
            raise CoderError(f"value {value} outside table support and no escape symbol")
        esc = len(table.freqs) - 1
        enc.encode(table.cum[esc], table.freqs[esc])
        raw = int(value) & _MASK32
        enc.encode_raw(raw >> 16)
        enc.encode_raw(raw & 0xFFFF)
    else:
        enc.encode(table.cum[i], table.freqs[i])


def read_symbol(dec: RangeDecoder, table: FrequencyTable) -> int:
    i = dec.decode(table.cum)
    if table.escape and i == len(table.freqs) - 1:
        raw = (dec.decode_raw() << 16) | dec.decode_raw()
        return raw - (1 << 32) if raw & 0x80000000 else raw
    return table.offset + i


def encode_symbols(symbols, table) -> bytes:
    """Code integer symbols; ``table`` is one table or one table per symbol."""
    symbols = [int(s) for s in np.asarray(symbols).reshape(-1)]
    enc = RangeEncoder()
    for s, t in zip(symbols, _tables_for(table, len(symbols))):
        write_symbol(enc, s, t)
    return enc.finish()


def decode_symbols(data: bytes, n: int, table) -> list[int]:
    dec = RangeDecoder(data)
    return [read_symbol(dec, t) for t in _tables_for(table, n)]


def encode_bits(bits, probs_of_one) -> bytes:
    """Code binary symbols with per-bit probabilities of a one.

    Float probabilities are quantised with :func:`quantize_probs`; integer
    arrays are taken as already on the 16-bit grid.
    """
    bits = np.asarray(bits).reshape(-1)
    q = _as_grid(probs_of_one, bits.size)
    enc = RangeEncoder()
    for b, p in zip(bits.tolist(), q.tolist()):
        enc.encode_bit(1 if b else 0, p)
    return enc.finish()


def decode_bits(data: bytes, n: int, probs_of_one) -> np.ndarray:
    q = _as_grid(probs_of_one, n)
    dec = RangeDecoder(data)
    return np.array([dec.decode_bit(p) for p in q.tolist()], dtype=np.uint8)


def _as_grid(probs, n: int) -> np.ndarray:
    probs = np.asarray(probs).reshape(-1)
    if probs.size != n:
        raise CoderError(f"got {probs.size} probabilities for {n} bits")
    if np.issubdtype(probs.dtype, np.integer):
        return np.clip(probs.astype(np.int64), 1, PROB_ONE - 1)
    return quantize_probs(probs)


def ideal_bits(bits, probs_of_one) -> float:
    """Shannon code length (bits) of ``bits`` under grid-quantised probabilities."""
    bits = np.asarray(bits).reshape(-1).astype(bool)
    q = _as_grid(probs_of_one, bits.size) / PROB_ONE
    return float(-np.log2(np.where(bits, q, 1.0 - q)).sum())

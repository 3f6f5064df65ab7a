import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divc.coder import (
    PROB_ONE,
    CoderError,
    CorruptStreamError,
    FrequencyTable,
    RangeDecoder,
    RangeEncoder,
    decode_bits,
    decode_symbols,
    encode_bits,
    encode_symbols,
    ideal_bits,
    quantize_probs,
)


def _table(weights, offset=0, escape=False):
    w = np.asarray(weights, float)
    f = np.maximum(1, np.floor(w / w.sum() * (PROB_ONE - len(w)))).astype(int)
    f[np.argmax(f)] += PROB_ONE - f.sum()
    return FrequencyTable.from_frequencies(f, offset, escape)


@st.composite
def tables_and_messages(draw):
    n = draw(st.integers(1, 40))
    weights = draw(st.lists(st.floats(1e-4, 1.0), min_size=n, max_size=n))
    escape = draw(st.booleans())
    offset = draw(st.integers(-100, 100))
    table = _table(weights + ([1e-3] if escape else []), offset, escape)
    values = st.integers(offset, offset + n - 1)
    if escape:
        values = values | st.integers(-2 ** 31, 2 ** 31 - 1)
    return table, draw(st.lists(values, max_size=60))


def test_docstring_example():
    table = FrequencyTable.from_frequencies([40000, 25536])
    assert decode_symbols(encode_symbols([0, 1, 1, 0], table), 4, table) == [0, 1, 1, 0]


def test_quantize_probs_clamps_to_open_grid():
    q = quantize_probs([0.0, 1.0, 0.5, np.nan, 1e-9])
    assert q.tolist() == [1, PROB_ONE - 1, PROB_ONE // 2, PROB_ONE // 2, 1]


def test_table_validation():
    with pytest.raises(CoderError):
        FrequencyTable.from_frequencies([PROB_ONE, 0])
    with pytest.raises(CoderError):
        FrequencyTable.from_frequencies([100, 200])
    t = FrequencyTable.from_frequencies([PROB_ONE // 2] * 2, offset=5)
    with pytest.raises(CoderError):
        encode_symbols([9], t)


@given(tables_and_messages())
def test_symbol_round_trip(case):
    table, msg = case
    assert decode_symbols(encode_symbols(msg, table), len(msg), table) == msg


@given(st.lists(st.tuples(st.booleans(), st.floats(0.0, 1.0)), max_size=200))
def test_bit_round_trip(pairs):
    bits = np.array([b for b, _ in pairs], dtype=np.uint8)
    probs = np.array([p for _, p in pairs])
    assert np.array_equal(decode_bits(encode_bits(bits, probs), len(bits), probs), bits)


@given(st.lists(st.integers(0, 2 ** 16 - 1), max_size=50), st.integers(1, 16))
def test_raw_bits_round_trip(values, nbits):
    values = [v % (1 << nbits) for v in values]
    enc = RangeEncoder()
    for v in values:
        enc.encode_raw(v, nbits)
    dec = RangeDecoder(enc.finish())
    assert [dec.decode_raw(nbits) for _ in values] == values


def test_carry_heavy_stream():
    # long runs of near-certain symbols push low against 0xFF.. boundaries
    rng = np.random.default_rng(0)
    bits = (rng.random(20000) < 0.999).astype(np.uint8)
    probs = np.full(bits.size, PROB_ONE - 1, dtype=np.int64)
    data = encode_bits(bits, probs)
    assert np.array_equal(decode_bits(data, bits.size, probs), bits)


def test_empty_stream_is_four_bytes():
    assert len(RangeEncoder().finish()) == 4


def test_reading_past_the_end_raises():
    table = _table([1.0] * 256)
    data = encode_symbols(list(range(200)), table)
    with pytest.raises(CorruptStreamError):
        decode_symbols(data[: len(data) // 2], 200, table)


def test_length_is_close_to_ideal(rng):
    p = rng.random(10000)
    bits = (rng.random(10000) < p).astype(np.uint8)
    data = encode_bits(bits, p)
    assert 8 * len(data) <= ideal_bits(bits, p) * 1.01 + 64


def test_per_symbol_tables():
    tables = [_table([1, 2, 3]), _table([5, 1], offset=-1), _table([1] * 7, offset=10)]
    msg = [2, -1, 16]
    assert decode_symbols(encode_symbols(msg, tables), 3, tables) == msg
    with pytest.raises(CoderError):
        encode_symbols(msg[:2], tables)

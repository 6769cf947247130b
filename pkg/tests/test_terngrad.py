import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cryptoqfl.terngrad import (
    HEADER_BYTES, TernaryUpdate, WireFormatError, cyclic_wrap, dequantize, deserialize,
    serialize, ternarize, wire_size,
)


def test_cyclic_wrap_examples():
    assert cyclic_wrap(np.array([0.0]), 2 * math.pi)[0] == 0
    assert cyclic_wrap(np.array([3 * math.pi]), 2 * math.pi)[0] == pytest.approx(-math.pi)
    assert cyclic_wrap(np.array([math.pi / 2]), 2 * math.pi)[0] == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        cyclic_wrap(np.array([np.inf]), 2 * math.pi)


def test_cyclic_wrap_idempotent_and_in_range(rng):
    g = rng.uniform(-50, 50, 1000)
    for period in (2 * math.pi, 4 * math.pi):
        w = cyclic_wrap(g, period)
        assert np.all((w >= -period / 2) & (w < period / 2))
        assert np.allclose(cyclic_wrap(w, period), w)
        # same class modulo the period
        k = (g - w) / period
        assert np.allclose(k, np.round(k))


def test_ternarize_boundaries(rng):
    u = ternarize(np.array([0.0, 2.5]), rng)
    assert u.dense().tolist() == [0, 1]
    assert u.scale == pytest.approx(2.5)


def test_ternarize_half_probability():
    rng = np.random.default_rng(3)
    g = np.array([0.5, -1.0])
    hits = np.array([ternarize(g, rng).dense()[0] for _ in range(100_000)])
    assert abs(np.mean(hits != 0) - 0.5) <= 0.01
    assert set(np.unique(hits)) <= {0, 1}


def test_all_zero_gradient(rng):
    u = ternarize(np.zeros(5), rng)
    assert u.nnz == 0 and u.scale == 0
    assert np.all(u.values() == 0)
    with pytest.raises(ValueError):
        ternarize(np.array([]), rng)


def test_unbiased_per_coordinate():
    rng = np.random.default_rng(17)
    g = np.array([0.9, -0.3, 0.05, -1.0, 0.0, 0.5])
    M = 20_000
    s = float(np.float32(1.0))
    total = np.zeros_like(g)
    for _ in range(M):
        total += ternarize(g, rng).dense()
    mean = s * total / M
    assert np.all(np.abs(mean - g) <= 4 * s / math.sqrt(M))


def test_sparsity_monotone():
    rng = np.random.default_rng(5)
    g = np.array([0.1, 0.4, 0.8, 1.0])
    nz = np.zeros(3)
    for _ in range(20_000):
        nz += ternarize(g, rng).dense()[:3] != 0
    assert nz[0] < nz[1] < nz[2]


def test_common_scale_clips(rng):
    u = ternarize(np.array([2.0, -0.5]), rng, scale=1.0)
    assert u.dense()[0] == 1 and u.scale == 1.0


def test_deterministic_under_seed():
    g = np.linspace(-1, 1, 11)
    a = ternarize(g, np.random.default_rng(9))
    b = ternarize(g, np.random.default_rng(9))
    assert a == b


def test_dequantize():
    assert dequantize([5], 0.2, 5)[0] == pytest.approx(0.2)
    assert dequantize([0], 0.2, 5)[0] == 0
    rng = np.random.default_rng(2)
    digits = rng.integers(-1, 2, (6, 10))
    direct = np.mean([TernaryUpdate.from_dense(d, 0.3).values() for d in digits], axis=0)
    assert np.allclose(dequantize(digits.sum(0), float(np.float32(0.3)), 6), direct)


def test_wire_empty_and_single():
    empty = TernaryUpdate(0.0, (), (), 7)
    data = serialize(empty)
    assert len(data) == HEADER_BYTES == 17
    assert deserialize(data) == empty
    one = TernaryUpdate(0.25, (3,), (-1,), 7)
    data = serialize(one)
    assert len(data) == wire_size(1) == 21
    assert struct.unpack_from("<I", data, 17)[0] == 3 | (1 << 31)
    assert deserialize(data) == one


def test_wire_errors():
    data = serialize(TernaryUpdate(0.5, (1, 2), (1, 1), 4))
    with pytest.raises(WireFormatError):
        deserialize(data[:-1])
    with pytest.raises(WireFormatError):
        deserialize(b"\x00" * 17)
    with pytest.raises(WireFormatError):
        deserialize(data[:5])


def test_update_validation():
    with pytest.raises(ValueError):
        TernaryUpdate(1.0, (2, 1), (1, 1), 4)
    with pytest.raises(ValueError):
        TernaryUpdate(1.0, (4,), (1,), 4)
    with pytest.raises(ValueError):
        TernaryUpdate(0.0, (1,), (1,), 4)
    with pytest.raises(ValueError):
        TernaryUpdate(1.0, (1,), (2,), 4)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_wire_round_trip_property(n, seed):
    rng = np.random.default_rng(seed)
    digits = rng.integers(-1, 2, n) * (rng.random(n) < rng.random())
    u = TernaryUpdate.from_dense(digits, float(rng.uniform(0.01, 10)))
    data = serialize(u)
    assert len(data) == 17 + 4 * u.nnz
    back = deserialize(data)
    assert back == u
    assert np.array_equal(back.dense(), digits)

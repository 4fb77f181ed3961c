import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmcvqkd.channel import RandomSource
from dmcvqkd.privacy import (
    EntropySidecar,
    KeyLengthParams,
    ToeplitzSeed,
    aggregate_skr,
    backsolve_entropy_rate,
    epsilon_budget,
    key_length,
    load_sidecar,
    pa_penalty,
    read_key,
    save_sidecar,
    toeplitz_hash,
    write_key,
)


def _naive(x, seed):
    # entry by entry from the diagonal definition
    l, m = seed.out_len, seed.in_len
    out = []
    for i in range(l):
        acc = 0
        for j in range(m):
            acc ^= int(seed.bits[i - j + m - 1]) & int(x[j])
        out.append(acc)
    return np.array(out, dtype=np.uint8)


def test_seed_layout():
    seed = ToeplitzSeed(np.array([1, 0, 0, 1, 1], np.uint8), 2, 4)
    t = seed.matrix()
    assert t.shape == (2, 4)
    for i in range(2):
        for j in range(4):
            assert t[i, j] == seed.bits[i - j + 3]
    assert np.array_equal(seed.first_row, t[0])
    assert np.array_equal(seed.first_col, t[:, 0])
    again = ToeplitzSeed.from_row_col(seed.first_row, seed.first_col)
    assert np.array_equal(again.bits, seed.bits)


def test_seed_validation():
    with pytest.raises(ValueError):
        ToeplitzSeed(np.zeros(4, np.uint8), 2, 4)
    with pytest.raises(ValueError):
        ToeplitzSeed(np.array([0, 2, 0], np.uint8), 2, 2)
    with pytest.raises(ValueError):
        ToeplitzSeed.from_row_col([1, 0], [0, 1])


@pytest.mark.parametrize("l,m", [(1, 1), (3, 7), (16, 40), (31, 33)])
@pytest.mark.parametrize("method", ["direct", "fft"])
def test_hash_matches_naive(l, m, method):
    rng = RandomSource(l * 100 + m)
    seed = ToeplitzSeed.random(l, m, rng.fork(0))
    x = rng.fork(1).bits(m)
    assert np.array_equal(toeplitz_hash(x, seed, method=method), _naive(x, seed))


def test_fft_segments_agree_with_direct():
    rng = RandomSource(3)
    m = 40_000  # spans three FFT segments
    seed = ToeplitzSeed.random(257, m, rng.fork(0))
    x = rng.fork(1).bits(m)
    assert np.array_equal(toeplitz_hash(x, seed, method="fft"), toeplitz_hash(x, seed, method="direct"))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.integers(0, 200), st.integers(0, 2**32 - 1))
def test_hash_is_linear(l, extra, s):
    m = l + extra
    rng = RandomSource(s)
    seed = ToeplitzSeed.random(l, m, rng.fork(0))
    x, y = rng.fork(1).bits(m), rng.fork(2).bits(m)
    assert np.array_equal(toeplitz_hash(x ^ y, seed), toeplitz_hash(x, seed) ^ toeplitz_hash(y, seed))
    assert not toeplitz_hash(np.zeros(m, np.uint8), seed).any()


def test_hash_argument_checks():
    seed = ToeplitzSeed.random(4, 8, RandomSource(0))
    with pytest.raises(ValueError):
        toeplitz_hash(np.zeros(7, np.uint8), seed)
    with pytest.raises(ValueError):
        toeplitz_hash(np.zeros(8, np.uint8), seed, out_len=5)
    with pytest.raises(ValueError):
        toeplitz_hash(np.zeros(8, np.uint8), seed, method="nope")
    wide = ToeplitzSeed.random(9, 8, RandomSource(0))
    with pytest.raises(ValueError):
        toeplitz_hash(np.zeros(8, np.uint8), wide)


def test_epsilon_budget_composition():
    b = epsilon_budget(2e-11, 7e-11, 1e-11, 7e-11, 2e-11)
    assert (b.eps_cor, b.eps_sec, b.eps_total) == (2e-11, 8e-11, 1e-10)
    # the maximum switches branch when the test terms dominate
    b = epsilon_budget(2e-11, 1e-11, 5e-11, 5e-11, 1e-11)
    assert Fraction(repr(b.eps_sec)) == Fraction(1, 10**10)
    with pytest.raises(ValueError):
        epsilon_budget(0, 1e-11, 1e-11, 1e-11, 1e-11)


def test_key_length_by_hand():
    p = KeyLengthParams(n=1000, entropy_rate=0.5, delta_bar=0.01, delta_w=0.02, leak_ec=100.0, eps_pa=2**-10)
    # 1000 * 0.47 - 100 - 2 * 10
    assert key_length(p) == 350
    assert pa_penalty(2**-10) == 20.0
    assert key_length(KeyLengthParams(n=10, entropy_rate=0.1, leak_ec=5.0)) == 0
    with pytest.raises(ValueError):
        KeyLengthParams(n=0, entropy_rate=1.0)
    with pytest.raises(ValueError):
        KeyLengthParams(n=10, entropy_rate=1.0, leak_ec=-1.0)


@given(st.integers(1, 10**12), st.floats(0, 2), st.floats(0, 1e12), st.floats(0, 1e12))
def test_key_length_monotone_in_leak(n, h, a, b):
    lo, hi = sorted((a, b))
    assert key_length(KeyLengthParams(n, h, leak_ec=hi)) <= key_length(KeyLengthParams(n, h, leak_ec=lo))


def test_backsolve_inverts_key_length():
    total, n, leak = 10**10, 7 * 10**9, 1.3e10
    h = backsolve_entropy_rate(1.37e-2, total, n, leak, 2e-11, 0.001, 0.002)
    ell = key_length(KeyLengthParams(n, h, 0.001, 0.002, leak))
    assert ell / total == pytest.approx(1.37e-2, rel=1e-6)


def test_aggregate_rate():
    assert aggregate_skr(0.01, 0.02, 1e9) == pytest.approx(3e7)
    with pytest.raises(ValueError):
        aggregate_skr(-1, 0, 1)


def test_sidecar_round_trip(tmp_path):
    s = EntropySidecar(1.9, 0.01, 0.0, "test")
    path = tmp_path / "s.yaml"
    save_sidecar(s, path)
    assert load_sidecar(path) == s
    path.write_text("entropy_rate: 1.0\nsurprise: 2\n")
    with pytest.raises(ValueError):
        load_sidecar(path)
    path.write_text("delta_bar: 0.1\n")
    with pytest.raises(ValueError):
        load_sidecar(path)
    with pytest.raises(ValueError):
        EntropySidecar(1.0, -0.1)


def test_key_file_round_trip(tmp_path):
    bits = RandomSource(5).bits(1001)
    seed = ToeplitzSeed.random(4, 8, RandomSource(1))
    budget = epsilon_budget(2e-11, 7e-11, 1e-11, 7e-11, 2e-11)
    path = tmp_path / "key.bin"
    write_key(path, bits, seed, budget)
    back, meta = read_key(path)
    assert np.array_equal(back, bits)
    assert meta["seed_digest"] == seed.digest()
    assert meta["eps_total"] == 1e-10
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        read_key(path)


def test_collision_probability_small_case():
    # exhaustive over all seeds for l = 2, m = 3: each nonzero difference collides on exactly 1/4 of seeds
    l, m = 2, 3
    d = np.array([1, 0, 1], np.uint8)
    hits = 0
    for s in range(1 << (l + m - 1)):
        bits = np.array([(s >> k) & 1 for k in range(l + m - 1)], np.uint8)
        hits += not toeplitz_hash(d, ToeplitzSeed(bits, l, m)).any()
    assert Fraction(hits, 1 << (l + m - 1)) == Fraction(1, 4)
    assert math.isclose(2.0**-l, 0.25)

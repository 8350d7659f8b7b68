import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import toeplitz

from otpsim.bits import (
    as_bits,
    bits_to_bytes,
    expand_bits,
    gf2_inverse,
    gf2_matmul,
    hamming_distance,
    toeplitz_hash,
)


def test_as_bits_accepts_strings_and_rejects_non_bits():
    assert as_bits("0110").tolist() == [0, 1, 1, 0]
    with pytest.raises(ValueError):
        as_bits([0, 2])


def test_bits_to_bytes_msb_first():
    assert bits_to_bytes("10000001") == b"\x81"


def test_expand_bits_is_deterministic_prefix_stable():
    a = expand_bits(b"x", 100)
    assert np.array_equal(a, expand_bits(b"x", 100))
    assert np.array_equal(expand_bits(b"x", 37), a[:37])
    assert not np.array_equal(a, expand_bits(b"y", 100))


def test_hamming_distance_shape_mismatch():
    with pytest.raises(ValueError):
        hamming_distance([0, 1], [0, 1, 1])


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 24), seed=st.integers(0, 2**32 - 1))
def test_gf2_inverse_of_invertible_matrix(n, seed):
    rng = np.random.default_rng(seed)
    eye = np.eye(n, dtype=np.uint8)
    lower = np.tril(rng.integers(0, 2, (n, n), dtype=np.uint8), -1) | eye
    upper = np.triu(rng.integers(0, 2, (n, n), dtype=np.uint8), 1) | eye
    m = gf2_matmul(lower, upper)
    assert np.array_equal(gf2_matmul(m, gf2_inverse(m)), eye)


def test_gf2_inverse_singular():
    with pytest.raises(np.linalg.LinAlgError):
        gf2_inverse(np.array([[1, 1], [1, 1]], dtype=np.uint8))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 40), out_len=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_toeplitz_hash_matches_explicit_matrix(n, out_len, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, n, dtype=np.uint8)
    s = rng.integers(0, 2, n + out_len - 1, dtype=np.uint8)
    # Column 0 is s[n-1:], row 0 is s[n-1::-1].
    T = toeplitz(s[n - 1:], s[n - 1::-1]).astype(np.int64)
    assert np.array_equal(toeplitz_hash(x, s, out_len), (T @ x) % 2)


def test_toeplitz_hash_batch_and_seed_length():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2, (3, 10), dtype=np.uint8)
    s = rng.integers(0, 2, 14, dtype=np.uint8)
    batch = toeplitz_hash(x, s, 5)
    assert batch.shape == (3, 5)
    assert all(np.array_equal(batch[i], toeplitz_hash(x[i], s, 5)) for i in range(3))
    with pytest.raises(ValueError):
        toeplitz_hash(x[0], s[:-1], 5)

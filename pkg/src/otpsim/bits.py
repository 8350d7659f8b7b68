"""Bit-block helpers and GF(2) linear algebra.

A bit block is a 1-D ``numpy.uint8`` array holding 0/1 values.  Batches of
blocks are 2-D arrays with one block per row.
"""

from __future__ import annotations

import hashlib

import numpy as np


def as_bits(bits) -> np.ndarray:
    """Coerce a sequence of 0/1 values (or a '0101' string) to a uint8 array."""
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.size and arr.max() > 1:
        raise ValueError("bit blocks may only contain 0 and 1")
    return arr


def random_bits(rng: np.random.Generator, size) -> np.ndarray:
    return rng.integers(0, 2, size=size, dtype=np.uint8)


def hamming_distance(a, b) -> int:
    a, b = as_bits(a), as_bits(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def bits_to_bytes(bits) -> bytes:
    return np.packbits(as_bits(bits)).tobytes()


def expand_bits(material: bytes, count: int) -> np.ndarray:
    """Deterministically expand ``material`` into ``count`` bits with SHAKE-256."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    stream = hashlib.shake_256(material).digest((count + 7) // 8)
    return np.unpackbits(np.frombuffer(stream, dtype=np.uint8))[:count]


def gf2_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product over GF(2).

    Goes through float64 BLAS; exact as long as the inner dimension stays
    below 2**53.
    """
    prod = np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)
    return (prod.astype(np.int64) & 1).astype(np.uint8)


def gf2_inverse(matrix: np.ndarray) -> np.ndarray:
    """Invert a square binary matrix by Gauss-Jordan elimination.

    Raises ``np.linalg.LinAlgError`` when the matrix is singular over GF(2).
    """
    m = np.asarray(matrix, dtype=np.uint8) & 1
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    aug = np.concatenate([m, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivots = np.flatnonzero(aug[col:, col])
        if pivots.size == 0:
            raise np.linalg.LinAlgError("matrix is singular over GF(2)")
        p = col + pivots[0]
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        rows = np.flatnonzero(aug[:, col])
        rows = rows[rows != col]
        aug[rows] ^= aug[col]
    return aug[:, n:].copy()


def toeplitz_hash(bits, seed, out_len: int) -> np.ndarray:
    """Multiply ``bits`` by the out_len x n binary Toeplitz matrix of ``seed``.

    ``seed`` has n + out_len - 1 bits; entry (i, j) of the matrix is
    ``seed[i - j + n - 1]``, so the first row is ``seed[n-1::-1]`` and the
    first column is ``seed[n-1:]``.  Works on a single block or a batch.
    """
    x = as_bits(bits)
    s = as_bits(seed)
    n = x.shape[-1]
    if s.shape != (n + out_len - 1,):
        raise ValueError(
            f"Toeplitz seed must have {n + out_len - 1} bits, got {s.shape[-1] if s.ndim else 0}"
        )
    # y_i = sum_j s[i - j + n - 1] x_j  is a slice of the full convolution s * x.
    if x.ndim == 1:
        full = np.convolve(s.astype(np.int64), x.astype(np.int64))
        return (full[n - 1:n - 1 + out_len] & 1).astype(np.uint8)
    return np.stack([toeplitz_hash(row, s, out_len) for row in x])

"""Keyless transmission by randomness shaping.

Chain per information block ``m_i`` (L bits), starting from a public random
state ``s_0 = t0``::

    u_i = m_i XOR ore(s_{i-1})       one-way mask from the running state
    v_i = bre_forward(u_i)           invertible, fully diffusing GF(2) map
    x_i = ecc_encode(v_i)            channel code
    s_i = cre(s_{i-1}, v_i)          universal-hash compression into the state

A receiver that gets ``v_i`` exactly inverts every step.  One wrong bit in
``v_j`` diffuses over the whole of block j through ``bre_inverse`` and,
through the state, corrupts the masks of every later block.  Eve sees her
post-detection bits through a BSC at the PLS error floor ``p_e``, so with
``L`` sized for (1 - p_e)^L <= 2^-lambda she essentially never gets a
block error-free.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np

from . import channels
from .bits import as_bits, bits_to_bytes, expand_bits, gf2_inverse, gf2_matmul, random_bits, toeplitz_hash
from .channels import BscConfig, SeedStream
from .metrics import SecurityParams, minimum_block_length

IDENTITY_SEED = object()  # test-only: makes the BRE matrix the identity
EXHAUSTIVE_PATTERN_CAP = 20  # enumerate all 2**L error patterns up to this L


class Codec(Protocol):
    """External channel code plugged into the shaper (e.g. an LDPC wrapper)."""

    def encode(self, bits: np.ndarray) -> np.ndarray: ...

    def decode(self, word: np.ndarray) -> np.ndarray: ...


EccScheme = Union[str, Codec]
ECC_SCHEMES = ("passthrough", "repetition-3")


def required_block_length(security_level: int, error_floor: float) -> int:
    """Smallest block length meeting ``L >= lambda / log2(1/(1 - p_e))``."""
    if not 0.0 < error_floor < 1.0:
        raise ValueError(f"error_floor must lie in (0, 1), got {error_floor}")
    return minimum_block_length(security_level, error_floor)


def _seed_bytes(seed) -> bytes:
    if isinstance(seed, (bytes, bytearray)):
        return bytes(seed)
    if isinstance(seed, str):
        return seed.encode()
    b = as_bits(seed)
    return len(b).to_bytes(4, "big") + bits_to_bytes(b)


@functools.lru_cache(maxsize=64)
def _bre_matrices(seed: bytes, length: int) -> tuple[np.ndarray, np.ndarray]:
    digest = hashlib.blake2b(seed + b"/bre/" + length.to_bytes(4, "big"), digest_size=16).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    eye = np.eye(length, dtype=np.uint8)
    # Redraw until every output bit depends on at least L/4 input bits; only
    # short blocks ever need more than one draw.
    while True:
        lower = np.tril(random_bits(rng, (length, length)), -1) | eye
        upper = np.triu(random_bits(rng, (length, length)), 1) | eye
        forward = gf2_matmul(lower, upper)
        if 4 * int(forward.sum(axis=1).min()) >= length:
            break
    inverse = gf2_inverse(forward)
    forward.flags.writeable = False
    inverse.flags.writeable = False
    return forward, inverse


def bre_matrix(public_matrix_seed, length: int) -> np.ndarray:
    """The public L x L forward matrix, a product of unit lower and upper triangulars."""
    if public_matrix_seed is IDENTITY_SEED:
        return np.eye(length, dtype=np.uint8)
    return _bre_matrices(_seed_bytes(public_matrix_seed), length)[0]


def _apply_bre(block, public_matrix_seed, which: int) -> np.ndarray:
    x = as_bits(block)
    length = x.shape[-1]
    if public_matrix_seed is IDENTITY_SEED:
        return x.copy()
    matrix = _bre_matrices(_seed_bytes(public_matrix_seed), length)[which]
    return gf2_matmul(x, matrix.T)


def bre_forward(block, public_matrix_seed) -> np.ndarray:
    return _apply_bre(block, public_matrix_seed, 0)


def bre_inverse(block, public_matrix_seed) -> np.ndarray:
    return _apply_bre(block, public_matrix_seed, 1)


def ore(state, out_len: int, constant: bytes = b"otpsim/ore") -> np.ndarray:
    """One-way mask: SHAKE-256 of a public constant and the packed state."""
    s = as_bits(state)
    return expand_bits(constant + len(s).to_bytes(4, "big") + bits_to_bytes(s), out_len)


def cre(state, block, hash_seed) -> np.ndarray:
    """Compress ``state || block`` back to ``len(state)`` bits by Toeplitz hashing.

    ``hash_seed`` must hold ``2 * len(state) + len(block) - 1`` bits.
    """
    s, b = as_bits(state), as_bits(block)
    return toeplitz_hash(np.concatenate([s, b]), hash_seed, s.size)


def _repetition_decode(word: np.ndarray, factor: int) -> np.ndarray:
    if word.shape[-1] % factor:
        raise ValueError(f"codeword length {word.shape[-1]} is not a multiple of {factor}")
    votes = word.reshape(*word.shape[:-1], -1, factor).sum(axis=-1, dtype=np.int64)
    return (2 * votes > factor).astype(np.uint8)


def ecc_encode(block, scheme: EccScheme = "repetition-3") -> np.ndarray:
    b = as_bits(block)
    if scheme == "passthrough":
        return b.copy()
    if scheme == "repetition-3":
        return np.repeat(b, 3, axis=-1)
    if isinstance(scheme, str):
        raise ValueError(f"unknown ECC scheme {scheme!r}")
    return as_bits(scheme.encode(b))


def ecc_decode(word, scheme: EccScheme = "repetition-3") -> np.ndarray:
    w = as_bits(word)
    if scheme == "passthrough":
        return w.copy()
    if scheme == "repetition-3":
        return _repetition_decode(w, 3)
    if isinstance(scheme, str):
        raise ValueError(f"unknown ECC scheme {scheme!r}")
    return as_bits(scheme.decode(w))


@dataclass(frozen=True)
class ShaperConfig:
    """Shaper parameters.

    ``state_width`` defaults to twice the security level.  ``public_seed``
    names the session; the BRE matrix, the CRE hash seed and the ORE
    constant are all derived from it and are public.
    """

    params: SecurityParams
    state_width: int | None = None
    ecc: EccScheme = "repetition-3"
    public_seed: bytes = b"otpsim-session"
    t0_through_eve_channel: bool = False

    def __post_init__(self):
        if self.state_width is None:
            object.__setattr__(self, "state_width", 2 * self.params.security_level)
        if self.state_width < self.params.security_level:
            raise ValueError("state_width must be at least the security level")
        if isinstance(self.ecc, str) and self.ecc not in ECC_SCHEMES:
            raise ValueError(f"unknown ECC scheme {self.ecc!r}; expected one of {ECC_SCHEMES}")

    @property
    def block_length(self) -> int:
        return self.params.block_length

    @property
    def bre_seed(self) -> bytes:
        return self.public_seed + b"/bre"

    @property
    def ore_constant(self) -> bytes:
        return self.public_seed + b"/ore"

    @functools.cached_property
    def cre_seed(self) -> np.ndarray:
        w, length = self.state_width, self.block_length
        return expand_bits(self.public_seed + b"/cre", 2 * w + length - 1)


def _as_blocks(blocks, length: int, what: str) -> np.ndarray:
    arr = as_bits(blocks)
    if arr.size == 0:
        return arr.reshape(0, length)
    if arr.ndim != 2 or arr.shape[1] != length:
        raise ValueError(f"{what} must be blocks of exactly {length} bits, got shape {arr.shape}")
    return arr


def _check_state(t0, cfg: ShaperConfig) -> np.ndarray:
    s = as_bits(t0)
    if s.shape != (cfg.state_width,):
        raise ValueError(f"t0 must have {cfg.state_width} bits, got {s.size}")
    return s


def shape_blocks(blocks, t0, cfg: ShaperConfig) -> np.ndarray:
    """Run the shaping chain and return the pre-ECC blocks ``v_1..v_q``."""
    m = _as_blocks(blocks, cfg.block_length, "message")
    state = _check_state(t0, cfg)
    out = np.empty_like(m)
    for i, block in enumerate(m):
        u = block ^ ore(state, cfg.block_length, cfg.ore_constant)
        out[i] = bre_forward(u, cfg.bre_seed)
        state = cre(state, out[i], cfg.cre_seed)
    return out


def unshape_blocks(shaped, t0, cfg: ShaperConfig) -> np.ndarray:
    """Invert :func:`shape_blocks` given (possibly corrupted) ``v`` estimates."""
    v = _as_blocks(shaped, cfg.block_length, "shaped block")
    state = _check_state(t0, cfg)
    u = bre_inverse(v, cfg.bre_seed) if len(v) else v.copy()
    out = np.empty_like(v)
    for i in range(len(v)):
        out[i] = u[i] ^ ore(state, cfg.block_length, cfg.ore_constant)
        state = cre(state, v[i], cfg.cre_seed)
    return out


def shaper_encode(blocks, t0, cfg: ShaperConfig) -> np.ndarray:
    v = shape_blocks(blocks, t0, cfg)
    return ecc_encode(v, cfg.ecc) if len(v) else v


def shaper_decode(codewords, t0, cfg: ShaperConfig) -> np.ndarray:
    x = as_bits(codewords)
    if x.size == 0:
        return np.zeros((0, cfg.block_length), dtype=np.uint8)
    if x.ndim != 2:
        raise ValueError("codewords must be a 2-D array of blocks")
    return unshape_blocks(ecc_decode(x, cfg.ecc), t0, cfg)


@dataclass(frozen=True)
class KeylessReport:
    """Outcome of one keyless session.

    ``legit_ber`` is Bob's BER at the channel-decoder output (``v`` vs
    ``v_hat``); ``legit_message_ber`` is his end-to-end BER after
    unshaping, which diffusion and chaining amplify.
    """

    eve_ber_without_shaping: float
    eve_ber_with_shaping: float
    legit_ber: float
    legit_message_ber: float
    block_length: int
    achieved_dosa: float
    coded_dosa: float
    shaped_bits: int


def simulate_keyless(cfg: ShaperConfig, legit: BscConfig, eve: BscConfig, q: int, seed: SeedStream) -> KeylessReport:
    """Push ``q`` random blocks through both arms (with and without shaping).

    Bob's BSC acts on coded bits.  Eve's BSC is her PLS error floor and acts
    on her post-detection estimate of the pre-ECC blocks, which is why
    her unshaped BER equals ``eve.crossover``.
    """
    if not math.isclose(eve.crossover, cfg.params.error_floor, rel_tol=0, abs_tol=1e-12):
        raise ValueError(
            f"Eve crossover {eve.crossover} must equal the configured error floor {cfg.params.error_floor}"
        )
    if q < 1:
        raise ValueError("q must be at least 1")
    length = cfg.block_length
    messages = random_bits(seed.child("messages").generator(), (q, length))
    t0 = random_bits(seed.child("t0").generator(), cfg.state_width)

    v = shape_blocks(messages, t0, cfg)
    x = ecc_encode(v, cfg.ecc)
    v_bob = ecc_decode(channels.bsc(x, legit, seed.child("legit-shaped")), cfg.ecc)
    m_bob = unshape_blocks(v_bob, t0, cfg)

    t0_eve = channels.bsc(t0, eve, seed.child("eve-t0")) if cfg.t0_through_eve_channel else t0
    v_eve = channels.bsc(v, eve, seed.child("eve-shaped"))
    m_eve = unshape_blocks(v_eve, t0_eve, cfg)

    # Control arm: messages straight through the ECC and the same channels.
    m_eve_plain = channels.bsc(messages, eve, seed.child("eve-plain"))

    total = q * length
    coded_length = x.shape[1]
    return KeylessReport(
        eve_ber_without_shaping=float(np.count_nonzero(m_eve_plain != messages)) / total,
        eve_ber_with_shaping=float(np.count_nonzero(m_eve != messages)) / total,
        legit_ber=float(np.count_nonzero(v_bob != v)) / total,
        legit_message_ber=float(np.count_nonzero(m_bob != messages)) / total,
        block_length=length,
        achieved_dosa=cfg.params.security_level / length,
        coded_dosa=cfg.params.security_level / coded_length,
        shaped_bits=total,
    )


def error_free_probability(block_length: int, error_floor: float) -> float:
    """Probability that a BSC(p_e) leaves all ``block_length`` bits intact.

    Computed from the error-pattern distribution rather than ``(1-p)**L``:
    every pattern is enumerated for small blocks, otherwise the weight
    distribution is built bit by bit.  Only the all-zero pattern counts as
    success because one wrong bit scrambles the whole shaped block.
    """
    if block_length < 0:
        raise ValueError("block_length must be nonnegative")
    if not 0.0 <= error_floor <= 1.0:
        raise ValueError("error_floor must lie in [0, 1]")
    p = error_floor
    if block_length <= EXHAUSTIVE_PATTERN_CAP:
        patterns = np.arange(2**block_length, dtype=np.uint64)
        weights = np.zeros(patterns.shape, dtype=np.int64)
        for bit in range(block_length):
            weights += ((patterns >> np.uint64(bit)) & np.uint64(1)).astype(np.int64)
        probs = p**weights * (1.0 - p) ** (block_length - weights)
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ArithmeticError(f"pattern distribution sums to {total}")
        return float(probs[weights == 0].sum())
    # Weight distribution by dynamic programming over the bits.
    dist = np.zeros(block_length + 1)
    dist[0] = 1.0
    for k in range(block_length):
        dist[1:k + 2] = dist[1:k + 2] * (1.0 - p) + dist[0:k + 1] * p
        dist[0] *= 1.0 - p
    return float(dist[0])


def eve_success_exhaustive(lambda_small: int, error_floor: float) -> float:
    """Eve's chance of receiving a whole block of the sized length error-free."""
    if not 1 <= lambda_small <= 16:
        raise ValueError("lambda_small must lie in [1, 16]")
    length = required_block_length(lambda_small, error_floor)
    if length > 4096:
        raise ValueError(f"block length {length} exceeds the enumeration cap")
    return error_free_probability(length, error_floor)

"""Closed-form secrecy metrics and a brute-force perfect-secrecy audit.

All logarithms are base 2.  Ratios above 1 are returned unclamped; callers
that report them should flag the excess.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .channels import SeedStream

HIGH_SNR_CONSTANT = 2.83
AUDIT_MAX_STATES = 2**24


class LowSnrWarning(UserWarning):
    """The high-SNR DoSA approximation went negative."""


@dataclass(frozen=True)
class EntropyBudget:
    key_entropy_bits: float
    message_entropy_bits: float

    def __post_init__(self):
        if not self.message_entropy_bits > 0:
            raise ValueError("message_entropy_bits must be positive")
        if not self.key_entropy_bits >= 0:
            raise ValueError("key_entropy_bits must be nonnegative")


@dataclass(frozen=True)
class CapacityPair:
    secret_key_capacity: float
    channel_capacity: float

    def __post_init__(self):
        if not self.channel_capacity > 0:
            raise ValueError("channel_capacity must be positive")
        if not self.secret_key_capacity >= 0:
            raise ValueError("secret_key_capacity must be nonnegative")


@dataclass(frozen=True)
class SecurityParams:
    """Target security level, Eve's error floor and the block length in bits."""

    security_level: int
    error_floor: float
    block_length: int

    def __post_init__(self):
        if int(self.security_level) != self.security_level or self.security_level < 1:
            raise ValueError("security_level (lambda) must be a positive integer")
        if not 0.0 < self.error_floor <= 1.0:
            raise ValueError(f"error_floor must lie in (0, 1], got {self.error_floor}")
        if int(self.block_length) != self.block_length or self.block_length < 1:
            raise ValueError("block_length must be a positive integer")
        minimum = minimum_block_length(self.security_level, self.error_floor)
        if self.block_length < minimum:
            raise ValueError(
                f"block_length {self.block_length} is below the required minimum {minimum} "
                f"for lambda={self.security_level}, error_floor={self.error_floor}"
            )


def minimum_block_length(security_level: int, error_floor: float) -> int:
    """Smallest L with L * log2(1/(1-p_e)) >= lambda; 0 when p_e = 1."""
    if not 0.0 < error_floor <= 1.0:
        raise ValueError(f"error_floor must lie in (0, 1], got {error_floor}")
    if security_level < 1:
        raise ValueError("security_level must be >= 1")
    per_bit = min_entropy_bound(error_floor)
    if math.isinf(per_bit):
        return 0
    ratio = security_level / per_bit
    # Guard against ratios like 128.00000000000003 that are integers in exact arithmetic.
    nearest = round(ratio)
    if abs(ratio - nearest) < 1e-9 * max(1.0, ratio):
        return int(nearest)
    return math.ceil(ratio)


def degree_of_approaching(budget: EntropyBudget) -> float:
    return budget.key_entropy_bits / budget.message_entropy_bits


def degree_of_synchronous_approaching(pair: CapacityPair) -> float:
    return pair.secret_key_capacity / pair.channel_capacity


def dosa_highsnr_approx(snr_linear: float) -> float:
    """High-SNR approximation of the NBKG DoSA, ``1 - 2.83 / log2(snr)``.

    Emits :class:`LowSnrWarning` when the value is negative.
    """
    if not snr_linear > 1:
        raise ValueError("snr_linear must exceed 1")
    d = 1.0 - HIGH_SNR_CONSTANT / math.log2(snr_linear)
    if d < 0:
        warnings.warn(f"approximation is negative ({d:.3f}) at snr={snr_linear}", LowSnrWarning)
    return d


def min_entropy_bound(error_floor: float) -> float:
    """Per-bit min-entropy bound ``log2(1/(1-p_e))``; ``inf`` at p_e = 1."""
    if not 0.0 < error_floor <= 1.0:
        raise ValueError(f"error_floor must lie in (0, 1], got {error_floor}")
    if error_floor == 1.0:
        return math.inf
    return -math.log2(1.0 - error_floor)


def required_error_floor(target_dosa: float) -> float:
    if not target_dosa >= 0:
        raise ValueError("target_dosa must be nonnegative")
    return -math.expm1(-target_dosa * math.log(2.0))


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def exhaustive_secrecy_audit(
    cipher: Callable[[int, int], int],
    message_width: int,
    key_width: int,
    message_prior: Sequence[float] | Mapping[int, float] | None = None,
) -> tuple[float, float]:
    """Return ``(H(M), H(M|X))`` by enumerating every (message, key) pair.

    Messages and keys are integers of the given widths; the key is uniform
    and independent of the message.  ``message_prior`` defaults to uniform
    and may be a sequence indexed by message or a mapping.
    """
    if message_width < 0 or key_width < 0:
        raise ValueError("widths must be nonnegative")
    if message_width > 12 or key_width > 12 or 2 ** (message_width + key_width) > AUDIT_MAX_STATES:
        raise ValueError("widths exceed the enumeration cap (12 bits each, 2**24 joint states)")
    n_msg, n_key = 2**message_width, 2**key_width

    if message_prior is None:
        prior = np.full(n_msg, 1.0 / n_msg)
    elif isinstance(message_prior, Mapping):
        prior = np.zeros(n_msg)
        for m, p in message_prior.items():
            prior[m] = p
    else:
        prior = np.asarray(message_prior, dtype=np.float64)
    if prior.shape != (n_msg,) or (prior < 0).any() or abs(prior.sum() - 1.0) > 1e-12:
        raise ValueError("message_prior must be a distribution over all messages")

    joint: dict[tuple[int, int], float] = {}
    for m, k in itertools.product(range(n_msg), range(n_key)):
        if prior[m] == 0:
            continue
        x = cipher(m, k)
        joint[m, x] = joint.get((m, x), 0.0) + prior[m] / n_key

    observations = sorted({x for _, x in joint})
    col = {x: i for i, x in enumerate(observations)}
    table = np.zeros((n_msg, len(observations)))
    for (m, x), p in joint.items():
        table[m, col[x]] += p

    h_m = _entropy(prior)
    # H(M|X) = H(M, X) - H(X)
    h_m_given_x = _entropy(table.ravel()) - _entropy(table.sum(axis=0))
    return h_m, max(h_m_given_x, 0.0)


@dataclass(frozen=True)
class MonteCarloDosa:
    """Per-term Monte Carlo estimates (bits per full-duplex slot)."""

    legit_bits: float
    eve_bits: float
    reference_bits: float
    value: float
    stderr: float


def _gaussian_logpdf2(v: np.ndarray, cov: np.ndarray) -> np.ndarray:
    # v: (..., 2), cov: (..., 2, 2); natural-log density of a 2-D zero-mean Gaussian.
    a, b, d = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    det = a * d - b * b
    q = (d * v[..., 0] ** 2 - 2 * b * v[..., 0] * v[..., 1] + a * v[..., 1] ** 2) / det
    return -0.5 * q - 0.5 * np.log(det) - math.log(2 * math.pi)


def dosa_montecarlo_terms(
    snr_linear: float,
    sample_count: int,
    rng_seed: int,
    an_power_fraction: float = 0.5,
) -> MonteCarloDosa:
    """Monte Carlo estimate of the NBKG DoSA under the rotation/AN signal model.

    Gaussian inputs stand in for a capacity-achieving rotated constellation.
    Each party puts power ``1 - a`` on the real (information) axis and ``a``
    on the imaginary AN axis; legitimate gains are 1, self-interference
    cancellation is perfect, and every node (Eve included) has complex noise
    variance ``1/snr``.  Eve's gains are drawn Rayleigh per sample.

    The three information terms are sample means of information densities
    ``log2 p(out | in) / p(out)``.  The reference link is the same
    full-duplex real-axis signalling with no AN, ``log2(1 + 2 snr)`` bits
    per slot.
    """
    from .nbkg import eve_noise_covariance

    if not snr_linear > 1:
        raise ValueError("snr_linear must exceed 1")
    if sample_count < 10**4:
        raise ValueError("sample_count must be at least 10**4")
    if not 0.0 <= an_power_fraction < 1.0:
        raise ValueError("an_power_fraction must lie in [0, 1)")

    seed = SeedStream(rng_seed, "dosa-montecarlo")
    n = int(sample_count)
    noise_var = 1.0 / snr_linear
    p_info = 1.0 - an_power_fraction
    half = noise_var / 2.0

    # Legitimate directions: real-axis Gaussian input, real noise of variance half.
    rng = seed.child("legit").generator()
    x = math.sqrt(p_info) * rng.standard_normal((2, n))
    y = x + math.sqrt(half) * rng.standard_normal((2, n))
    legit_density = (
        -0.5 * (y - x) ** 2 / half + 0.5 * y**2 / (p_info + half) + 0.5 * math.log((p_info + half) / half)
    ) / math.log(2)
    legit_density = legit_density.sum(axis=0)

    # Eve: both real inputs superposed through Rayleigh gains, AN folded into noise.
    rng = seed.child("eve").generator()
    ga = math.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    gb = math.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    xa = math.sqrt(p_info) * rng.standard_normal(n)
    xb = math.sqrt(p_info) * rng.standard_normal(n)
    ua = np.stack([ga.real, ga.imag], axis=-1)
    ub = np.stack([gb.real, gb.imag], axis=-1)
    noise_cov = eve_noise_covariance(ga, gb, an_power_fraction, noise_var)
    chol = np.linalg.cholesky(noise_cov)
    w = np.einsum("nij,nj->ni", chol, rng.standard_normal((n, 2)))
    signal = ua * xa[:, None] + ub * xb[:, None]
    z = signal + w
    sig_cov = p_info * (ua[:, :, None] * ua[:, None, :] + ub[:, :, None] * ub[:, None, :])
    eve_density = (_gaussian_logpdf2(z - signal, noise_cov) - _gaussian_logpdf2(z, noise_cov + sig_cov)) / math.log(2)

    reference = math.log2(1.0 + 2.0 * snr_linear)
    numerator = legit_density - eve_density
    return MonteCarloDosa(
        legit_bits=float(legit_density.mean()),
        eve_bits=float(eve_density.mean()),
        reference_bits=reference,
        value=float(numerator.mean() / reference),
        stderr=float(numerator.std(ddof=1) / math.sqrt(n) / reference),
    )


def estimate_dosa_montecarlo(snr_linear: float, sample_count: int, rng_seed: int, **kwargs) -> float:
    return dosa_montecarlo_terms(snr_linear, sample_count, rng_seed, **kwargs).value

"""Seedable channel primitives for the wiretap simulations.

Every random operation takes a :class:`SeedStream`.  Streams are keyed by
``(master_seed, stream_label)`` and drive a counter-based Philox generator,
so the same stream always produces the same samples and differently
labelled streams are independent.  That is what lets Monte Carlo trials
run in any order, or in parallel, without changing results.

SNR convention: unit average energy per complex symbol over the total
complex noise variance.  ``snr_db = math.inf`` switches the noise off.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .bits import as_bits

NOISE_OFF = math.inf


@dataclass(frozen=True)
class SeedStream:
    master_seed: int
    stream_label: str = "root"

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def _key(self) -> np.ndarray:
        digest = hashlib.blake2b(
            f"{int(self.master_seed)}\x00{self.stream_label}".encode(), digest_size=16
        ).digest()
        return np.frombuffer(digest, dtype=np.uint64).copy()

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at counter 0 of this stream."""
        return np.random.Generator(np.random.Philox(key=self._key()))

    def child(self, *labels) -> "SeedStream":
        label = "/".join([self.stream_label, *map(str, labels)])
        return SeedStream(self.master_seed, label)


@dataclass(frozen=True)
class BscConfig:
    crossover: float

    def __post_init__(self):
        if not 0.0 <= self.crossover <= 0.5:
            raise ValueError(f"crossover must lie in [0, 0.5], got {self.crossover}")


@dataclass(frozen=True)
class WiretapLinkConfig:
    """Legitimate-link SNR plus Eve's view of both transmitters.

    Legitimate gains are fixed at 1.  ``eve_noise_variance`` is the total
    complex noise variance at Eve; 0.0 switches her noise off.
    """

    snr_db: float
    eve_gain_a: complex = 1.0 + 0.0j
    eve_gain_b: complex = 1.0 + 0.0j
    eve_noise_variance: float = 1e-3

    def __post_init__(self):
        if not self.eve_noise_variance >= 0.0:
            raise ValueError("eve_noise_variance must be nonnegative")
        for name in ("eve_gain_a", "eve_gain_b"):
            g = complex(getattr(self, name))
            if not (math.isfinite(g.real) and math.isfinite(g.imag)):
                raise ValueError(f"{name} must be finite")

    @property
    def legit_noise_variance(self) -> float:
        return noise_variance(self.snr_db)


def noise_variance(snr_db: float) -> float:
    """Total complex noise variance for a unit-energy symbol at ``snr_db``."""
    if snr_db == NOISE_OFF:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def complex_gaussian(rng: np.random.Generator, size, variance: float) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples, ``variance`` split over re/im."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def awgn(samples, snr_db: float, seed: SeedStream) -> np.ndarray:
    x = np.asarray(samples, dtype=np.complex128)
    var = noise_variance(snr_db)
    if var == 0.0:
        return x.copy()
    return x + complex_gaussian(seed.generator(), x.shape, var)


def bsc(bits, config: BscConfig | float, seed: SeedStream) -> np.ndarray:
    """Flip each bit independently with the configured crossover probability."""
    p = config.crossover if isinstance(config, BscConfig) else BscConfig(config).crossover
    x = as_bits(bits)
    if p == 0.0:
        return x.copy()
    flips = seed.generator().random(x.shape) < p
    return x ^ flips.astype(np.uint8)


def eve_superposition(tx_a, tx_b, cfg: WiretapLinkConfig, seed: SeedStream) -> np.ndarray:
    """What Eve hears while Alice and Bob transmit in the same full-duplex slots."""
    a = np.asarray(tx_a, dtype=np.complex128)
    b = np.asarray(tx_b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError(f"transmit streams differ in length: {a.shape} vs {b.shape}")
    z = complex(cfg.eve_gain_a) * a + complex(cfg.eve_gain_b) * b
    if cfg.eve_noise_variance > 0.0:
        z = z + complex_gaussian(seed.generator(), z.shape, cfg.eve_noise_variance)
    return z


def sample_rayleigh_gain(seed: SeedStream, size=None):
    """Complex Gaussian gain(s) with unit mean squared magnitude."""
    g = complex_gaussian(seed.generator(), size if size is not None else 1, 1.0)
    return complex(g[0]) if size is None else g


def bit_error_rate(a, b) -> float:
    a, b = as_bits(a), as_bits(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.count_nonzero(a != b)) / a.size

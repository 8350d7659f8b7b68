"""Noise-based key generation with constellation-rotation exchange.

Protocol per trial:

1. each party samples local Gaussian noise and sign-quantizes it into bits;
2. the bits are QPSK-modulated, rotated by ``theta`` and projected onto the
   real axis; the imaginary axis carries artificial noise (AN);
3. both parties transmit simultaneously (full duplex).  After perfect
   self-interference cancellation each one sees only the peer's signal, so
   a real-axis detector ignores the AN.  Eve sees the superposition of both
   transmissions through her own gains, with the AN smeared over both axes;
4. each side privacy-amplifies ``alice_bits || bob_bits`` with a public
   Toeplitz seed to obtain the global key.

There is no reconciliation step, so a legitimate exchange error shows up
as a key mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from . import channels
from .bits import as_bits, random_bits, toeplitz_hash
from .channels import SeedStream, WiretapLinkConfig
from .metrics import min_entropy_bound

DEFAULT_THETA = math.atan(0.5)

# Gray-mapped QPSK indexed by the 2-bit pattern (b0 << 1) | b1:
# b0 picks the sign of the real part, b1 the sign of the imaginary part.
_PATTERN_BITS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
_SIGNS = 1 - 2 * _PATTERN_BITS.astype(np.int64)
QPSK_POINTS = (_SIGNS[:, 0] + 1j * _SIGNS[:, 1]) / math.sqrt(2)


@dataclass(frozen=True)
class RotationConfig:
    theta: float = DEFAULT_THETA
    an_power_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta < math.pi / 4:
            raise ValueError(f"theta must lie in (0, pi/4), got {self.theta}")
        if not 0.0 <= self.an_power_fraction < 1.0:
            raise ValueError("an_power_fraction must lie in [0, 1)")
        proj = np.sort(self.projections)
        if np.min(np.diff(proj)) < 1e-9:
            raise ValueError(f"theta={self.theta} makes two projected points coincide")

    @property
    def projections(self) -> np.ndarray:
        """Real-axis projection of each QPSK point, indexed by bit pattern."""
        return np.real(QPSK_POINTS * np.exp(-1j * self.theta))

    @property
    def amplitude_scale(self) -> float:
        """Maps a projection to the transmitted real component."""
        second_moment = float(np.mean(self.projections**2))
        return math.sqrt((1.0 - self.an_power_fraction) / second_moment)

    @property
    def levels(self) -> np.ndarray:
        return self.projections * self.amplitude_scale


def collect_noise_bits(count: int, seed: SeedStream) -> np.ndarray:
    """Sign-quantize ``count`` Gaussian noise samples (>= 0 maps to 1)."""
    if count <= 0:
        raise ValueError("count must be positive")
    samples = seed.generator().standard_normal(count)
    return (samples >= 0).astype(np.uint8)


def modulate_qpsk(bits) -> np.ndarray:
    b = as_bits(bits)
    if b.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    pairs = b.reshape(-1, 2)
    return QPSK_POINTS[(pairs[:, 0] << 1) | pairs[:, 1]]


def rotate_and_project(symbol, cfg: RotationConfig):
    return np.real(np.asarray(symbol) * np.exp(-1j * cfg.theta))


def build_tx_signal(projection, cfg: RotationConfig, seed: SeedStream):
    """Real part carries the scaled projection, imaginary part Gaussian AN."""
    p = np.asarray(projection, dtype=np.float64)
    real = p * cfg.amplitude_scale
    if cfg.an_power_fraction == 0.0:
        return real.astype(np.complex128)
    an = math.sqrt(cfg.an_power_fraction) * seed.generator().standard_normal(p.shape)
    return real + 1j * an


def detect_projection(received, cfg: RotationConfig) -> np.ndarray:
    """Minimum-distance 4-PAM decision on the real axis, returned as bits."""
    r = np.real(np.atleast_1d(np.asarray(received)))
    idx = np.argmin(np.abs(r[:, None] - cfg.levels[None, :]), axis=1)
    return _PATTERN_BITS[idx].reshape(-1)


class ExchangeResult(NamedTuple):
    alice_received: np.ndarray
    bob_received: np.ndarray
    eve_observation: np.ndarray


def _transmit(bits, cfg: RotationConfig, seed: SeedStream) -> np.ndarray:
    return build_tx_signal(rotate_and_project(modulate_qpsk(bits), cfg), cfg, seed)


def exchange_round(alice, bob, link: WiretapLinkConfig, cfg: RotationConfig, seed: SeedStream) -> ExchangeResult:
    """One full-duplex exchange of both local keys.

    ``alice_received`` is Alice's estimate of Bob's bits and vice versa.
    """
    a, b = as_bits(alice), as_bits(bob)
    if a.shape != b.shape:
        raise ValueError("local keys must have equal length")
    tx_a = _transmit(a, cfg, seed.child("an-alice"))
    tx_b = _transmit(b, cfg, seed.child("an-bob"))
    # Perfect SIC: each legit receiver sees only the peer through a unit gain.
    at_bob = channels.awgn(tx_a, link.snr_db, seed.child("noise-bob"))
    at_alice = channels.awgn(tx_b, link.snr_db, seed.child("noise-alice"))
    eve = channels.eve_superposition(tx_a, tx_b, link, seed.child("noise-eve"))
    return ExchangeResult(
        detect_projection(at_alice, cfg),
        detect_projection(at_bob, cfg),
        eve,
    )


def eve_noise_covariance(gain_a, gain_b, an_power_fraction: float, noise_variance: float) -> np.ndarray:
    """2x2 (re, im) covariance of AN plus thermal noise at Eve.

    Works elementwise over arrays of gains; the matrix axes come last.
    """
    ga, gb = np.asarray(gain_a, np.complex128), np.asarray(gain_b, np.complex128)
    # AN sent as j*g reaches Eve along the direction of j*h.
    va = np.stack([-ga.imag, ga.real], axis=-1)
    vb = np.stack([-gb.imag, gb.real], axis=-1)
    outer = va[..., :, None] * va[..., None, :] + vb[..., :, None] * vb[..., None, :]
    return an_power_fraction * outer + (noise_variance / 2.0) * np.eye(2)


def eve_detect(observation, link: WiretapLinkConfig, cfg: RotationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Joint ML estimate of both parties' bits from Eve's superposed samples.

    Eve knows theta, the AN power and her own gains.  The AN is Gaussian,
    so it folds into the noise covariance and ML reduces to a minimum
    Mahalanobis distance over the 16 (Alice, Bob) level pairs.
    """
    z = np.atleast_1d(np.asarray(observation, dtype=np.complex128))
    if z.size == 0:
        empty = np.zeros(0, dtype=np.uint8)
        return empty, empty.copy()
    ga, gb = complex(link.eve_gain_a), complex(link.eve_gain_b)
    lv = cfg.levels
    means = (ga * lv[:, None] + gb * lv[None, :]).reshape(-1)  # index 4*i_alice + i_bob
    cov = eve_noise_covariance(ga, gb, cfg.an_power_fraction, link.eve_noise_variance)
    # Tiny ridge keeps the noise-free, AN-free case well defined (plain min distance).
    prec = np.linalg.inv(cov + 1e-12 * np.eye(2))
    d = z[:, None] - means[None, :]
    dv = np.stack([d.real, d.imag], axis=-1)
    score = np.einsum("nki,ij,nkj->nk", dv, prec, dv)
    best = np.argmin(score, axis=1)
    alice = _PATTERN_BITS[best // 4].reshape(-1)
    bob = _PATTERN_BITS[best % 4].reshape(-1)
    return alice, bob


@dataclass(frozen=True)
class GlobalKey:
    bits: np.ndarray
    amplifier_seed: np.ndarray


def privacy_amplify(bits, public_seed, out_len: int) -> GlobalKey:
    """Toeplitz universal hash of ``bits`` down to ``out_len`` bits."""
    x = as_bits(bits)
    if not 0 < out_len < x.size:
        raise ValueError(f"out_len must lie in (0, {x.size}), got {out_len}")
    s = as_bits(public_seed)
    return GlobalKey(toeplitz_hash(x, s, out_len), s)


EveGains = Union[str, tuple]


@dataclass(frozen=True)
class NbkgConfig:
    """One protocol run.

    ``eve_gains`` is ``"rayleigh"`` (fresh complex Gaussian gains per run),
    ``"random-phase"`` (unit magnitude, uniform phase) or a fixed pair of
    complex gains.  ``eve_snr_db`` defaults to the legitimate SNR.  With
    ``key_length=None`` the key keeps ``floor(H_min)`` bits of the exchanged
    material, where ``H_min`` is the per-bit min-entropy bound at Eve's
    measured error rate.
    """

    payload_bits: int = 256
    snr_db: float = 25.0
    rotation: RotationConfig = field(default_factory=RotationConfig)
    eve_snr_db: float | None = None
    eve_gains: EveGains = "rayleigh"
    key_length: int | None = None

    def __post_init__(self):
        if self.payload_bits <= 0 or self.payload_bits % 2:
            raise ValueError("payload_bits must be a positive even integer")
        if self.key_length is not None and not 0 < self.key_length < 2 * self.payload_bits:
            raise ValueError("key_length must be positive and below the exchanged bit count")
        if isinstance(self.eve_gains, str) and self.eve_gains not in ("rayleigh", "random-phase"):
            raise ValueError(f"unknown eve_gains mode {self.eve_gains!r}")


@dataclass(frozen=True)
class NbkgReport:
    key_mismatch: bool
    eve_key_distance: float
    eve_symbol_ber: float
    legit_symbol_ber: float
    achieved_dosa: float
    exchange_block_error: bool
    key_length: int


def draw_eve_link(config: NbkgConfig, seed: SeedStream) -> WiretapLinkConfig:
    if config.eve_gains == "rayleigh":
        ga = channels.sample_rayleigh_gain(seed.child("gain-a"))
        gb = channels.sample_rayleigh_gain(seed.child("gain-b"))
    elif config.eve_gains == "random-phase":
        phases = seed.child("gain-phase").generator().uniform(0.0, 2 * math.pi, 2)
        ga, gb = np.exp(1j * phases)
    else:
        ga, gb = config.eve_gains
    eve_snr = config.snr_db if config.eve_snr_db is None else config.eve_snr_db
    return WiretapLinkConfig(
        snr_db=config.snr_db,
        eve_gain_a=complex(ga),
        eve_gain_b=complex(gb),
        eve_noise_variance=channels.noise_variance(eve_snr),
    )


def run_nbkg(config: NbkgConfig, seed: SeedStream) -> NbkgReport:
    n = config.payload_bits
    alice = collect_noise_bits(n, seed.child("alice-noise"))
    bob = collect_noise_bits(n, seed.child("bob-noise"))
    link = draw_eve_link(config, seed.child("eve-link"))
    at_alice, at_bob, observation = exchange_round(alice, bob, link, config.rotation, seed.child("exchange"))
    eve_a, eve_b = eve_detect(observation, link, config.rotation)

    # Both sides hash the material in the same (Alice, Bob) order.
    truth = np.concatenate([alice, bob])
    alice_material = np.concatenate([alice, at_alice])
    bob_material = np.concatenate([at_bob, bob])
    eve_material = np.concatenate([eve_a, eve_b])

    legit_errors = np.count_nonzero(at_alice != bob) + np.count_nonzero(at_bob != alice)
    legit_ber = legit_errors / (2 * n)
    eve_ber = float(np.count_nonzero(eve_material != truth)) / (2 * n)

    if config.key_length is not None:
        out_len = config.key_length
    else:
        floor = min(max(eve_ber, 1e-12), 0.5)
        out_len = int(2 * n * min_entropy_bound(floor))
        out_len = min(max(out_len, 1), 2 * n - 1)

    pa_seed = random_bits(seed.child("pa-seed").generator(), 2 * n + out_len - 1)
    key_a = privacy_amplify(alice_material, pa_seed, out_len).bits
    key_b = privacy_amplify(bob_material, pa_seed, out_len).bits
    key_e = privacy_amplify(eve_material, pa_seed, out_len).bits

    # n/2 full-duplex slots; the reference QPSK data link moves 4 bits per slot.
    dosa = (out_len / (n / 2)) / 4.0
    return NbkgReport(
        key_mismatch=bool(np.any(key_a != key_b)),
        eve_key_distance=float(np.count_nonzero(key_e != key_a)) / out_len,
        eve_symbol_ber=eve_ber,
        legit_symbol_ber=legit_ber,
        achieved_dosa=dosa,
        exchange_block_error=bool(legit_errors),
        key_length=out_len,
    )

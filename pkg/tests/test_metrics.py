import math
import warnings
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from otpsim import metrics
from otpsim.metrics import CapacityPair, EntropyBudget, SecurityParams

unit_open = st.floats(1e-9, 1 - 1e-9, allow_nan=False)


# --- DoA / DoSA ------------------------------------------------------------


@pytest.mark.parametrize(
    "ek, em, expected",
    [(128, 128, 1.0), (0, 1000, 0.0), (128, 398, 128 / 398)],
)
def test_degree_of_approaching(ek, em, expected):
    assert metrics.degree_of_approaching(EntropyBudget(ek, em)) == pytest.approx(expected, abs=1e-15)


def test_doa_cross_check_value():
    assert metrics.degree_of_approaching(EntropyBudget(128, 398)) == pytest.approx(0.3216, abs=1e-4)


@pytest.mark.parametrize("ck, cm, expected", [(1e6, 1e6, 1.0), (0, 1e6, 0.0), (0.51, 1.0, 0.51)])
def test_degree_of_synchronous_approaching(ck, cm, expected):
    assert metrics.degree_of_synchronous_approaching(CapacityPair(ck, cm)) == pytest.approx(expected)


def test_ratios_above_one_are_not_clamped():
    assert metrics.degree_of_approaching(EntropyBudget(3, 2)) == 1.5


@pytest.mark.parametrize("bad", [0, -1])
def test_budget_rejects_nonpositive_message_entropy(bad):
    with pytest.raises(ValueError):
        EntropyBudget(1, bad)
    with pytest.raises(ValueError):
        CapacityPair(1, bad)


@given(
    a=st.floats(0, 1e6),
    b=st.floats(1e-3, 1e6),
    c=st.floats(1e-3, 1e3),
)
def test_ratios_are_scale_invariant(a, b, c):
    base = metrics.degree_of_approaching(EntropyBudget(a, b))
    scaled = metrics.degree_of_approaching(EntropyBudget(a * c, b * c))
    assert scaled == pytest.approx(base, rel=1e-12, abs=1e-300)
    base = metrics.degree_of_synchronous_approaching(CapacityPair(a, b))
    scaled = metrics.degree_of_synchronous_approaching(CapacityPair(a * c, b * c))
    assert scaled == pytest.approx(base, rel=1e-12, abs=1e-300)


# --- closed forms ---------------------------------------------------------


@pytest.mark.parametrize("exp, expected", [(28.3, 0.9), (283, 0.99), (2.83, 0.0)])
def test_dosa_highsnr_approx(exp, expected):
    assert metrics.dosa_highsnr_approx(2.0**exp) == pytest.approx(expected, abs=1e-12)


def test_dosa_highsnr_warns_when_negative():
    with pytest.warns(metrics.LowSnrWarning):
        assert metrics.dosa_highsnr_approx(2.0) < 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        metrics.dosa_highsnr_approx(2.0**10)
    with pytest.raises(ValueError):
        metrics.dosa_highsnr_approx(1.0)


def test_min_entropy_bound_examples():
    assert metrics.min_entropy_bound(0.5) == 1.0
    assert metrics.min_entropy_bound(0.2) == pytest.approx(math.log2(1 / 0.8))
    assert metrics.min_entropy_bound(0.2) == pytest.approx(0.3219, abs=1e-4)
    assert metrics.min_entropy_bound(1e-15) == pytest.approx(0.0, abs=1e-14)
    assert metrics.min_entropy_bound(1.0) == math.inf
    for bad in (0.0, -0.1, 1.01):
        with pytest.raises(ValueError):
            metrics.min_entropy_bound(bad)


def test_required_error_floor_examples():
    assert metrics.required_error_floor(1) == 0.5
    assert metrics.required_error_floor(0) == 0.0
    assert metrics.required_error_floor(0.51) == pytest.approx(1 - 2**-0.51, abs=1e-15)
    assert metrics.required_error_floor(0.51) == pytest.approx(0.29778, abs=1e-5)
    with pytest.raises(ValueError):
        metrics.required_error_floor(-0.1)


@given(unit_open)
def test_error_floor_round_trip(p):
    assert metrics.required_error_floor(metrics.min_entropy_bound(p)) == pytest.approx(p, abs=1e-12)


@given(unit_open, unit_open)
def test_monotonicity(p, q):
    assume(p < q)
    assert metrics.min_entropy_bound(p) < metrics.min_entropy_bound(q)
    assert metrics.required_error_floor(p) < metrics.required_error_floor(q)


@given(st.floats(2.0**2.9, 1e300), st.floats(2.0**2.9, 1e300))
def test_highsnr_approx_increasing(a, b):
    assume(a * (1 + 1e-9) < b)
    assert metrics.dosa_highsnr_approx(a) < metrics.dosa_highsnr_approx(b)


def test_minimum_block_length_and_security_params():
    assert metrics.minimum_block_length(128, 0.5) == 128
    assert metrics.minimum_block_length(128, 1.0) == 0
    SecurityParams(128, 0.2, 398)
    with pytest.raises(ValueError, match="398"):
        SecurityParams(128, 0.2, 397)
    with pytest.raises(ValueError):
        SecurityParams(128, 1.2, 398)


# --- secrecy audit --------------------------------------------------------


def _brute_force_conditional_entropy(cipher, width, key_width):
    """Exact H(M|X) with rationals, uniform message and key."""
    joint = Counter()
    for m in range(2**width):
        for k in range(2**key_width):
            joint[m, cipher(m, k)] += 1
    total = 2 ** (width + key_width)
    px = Counter()
    for (m, x), c in joint.items():
        px[x] += c
    h = 0.0
    for (m, x), c in joint.items():
        p_mx = Fraction(c, total)
        p_m_given_x = Fraction(c, px[x])
        h -= float(p_mx) * math.log2(p_m_given_x)
    return h


def test_audit_examples():
    assert metrics.exhaustive_secrecy_audit(lambda m, k: m ^ k, 4, 4) == pytest.approx((4.0, 4.0))
    assert metrics.exhaustive_secrecy_audit(lambda m, k: m, 4, 4) == pytest.approx((4.0, 0.0))


def test_audit_reused_two_bit_key():
    def reused(m, k):
        return m ^ (k | (k << 2))

    h_m, h_m_x = metrics.exhaustive_secrecy_audit(reused, 4, 2)
    assert h_m == pytest.approx(4.0)
    assert h_m_x == pytest.approx(_brute_force_conditional_entropy(reused, 4, 2), abs=1e-12)
    assert h_m_x == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(width=st.integers(1, 6), weights=st.data())
def test_xor_fresh_key_perfect_secrecy_any_prior(width, weights):
    w = np.array(weights.draw(st.lists(st.floats(0, 1), min_size=2**width, max_size=2**width)))
    assume(w.sum() > 1e-6)
    prior = w / w.sum()
    prior[-1] = 1.0 - prior[:-1].sum()
    assume(prior[-1] >= 0)
    h_m, h_m_x = metrics.exhaustive_secrecy_audit(lambda m, k: m ^ k, width, width, prior)
    assert h_m_x == pytest.approx(h_m, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(mw=st.integers(1, 5), kw=st.integers(0, 5), seed=st.integers(0, 2**32 - 1))
def test_conditioning_reduces_entropy(mw, kw, seed):
    table = np.random.default_rng(seed).integers(0, 64, (2**mw, 2**kw))
    h_m, h_m_x = metrics.exhaustive_secrecy_audit(lambda m, k: int(table[m, k]), mw, kw)
    assert h_m_x <= h_m + 1e-12


def test_audit_caps_and_prior_validation():
    with pytest.raises(ValueError):
        metrics.exhaustive_secrecy_audit(lambda m, k: m, 13, 1)
    with pytest.raises(ValueError):
        metrics.exhaustive_secrecy_audit(lambda m, k: m, 2, 2, [0.5, 0.5, 0.5, 0.5])
    h_m, _ = metrics.exhaustive_secrecy_audit(lambda m, k: m ^ k, 2, 2, {0: 0.5, 3: 0.5})
    assert h_m == pytest.approx(1.0)


# --- Monte Carlo DoSA ------------------------------------------------------


@pytest.fixture(scope="module")
def mc_sweep():
    return {snr: metrics.dosa_montecarlo_terms(snr, 10**5, 3) for snr in (1.01, 1e2, 1e4, 1e6)}


def test_montecarlo_high_snr_in_range():
    value = metrics.estimate_dosa_montecarlo(1e6, 10**6, 1)
    assert 0.5 < value < 1.0
    # Regression pin from the first verified run.
    assert value == pytest.approx(0.836, abs=0.005)


def test_montecarlo_trend(mc_sweep):
    seq = [mc_sweep[s] for s in (1e2, 1e4, 1e6)]
    for lo, hi in zip(seq, seq[1:]):
        assert hi.value >= lo.value - 2 * math.hypot(lo.stderr, hi.stderr)


def test_montecarlo_low_snr_is_smallest(mc_sweep):
    low = mc_sweep[1.01].value
    assert low < 0.25
    assert low < min(mc_sweep[s].value for s in (1e2, 1e4, 1e6))


def test_montecarlo_eve_leakage_closed_form(mc_sweep):
    # Independent closed form for the high-SNR Rayleigh limit of Eve's leakage.
    assert mc_sweep[1e6].eve_bits == pytest.approx(1 / math.log(2) + 1, abs=0.03)


def test_montecarlo_is_deterministic_and_validates():
    assert metrics.estimate_dosa_montecarlo(100, 10**4, 5) == metrics.estimate_dosa_montecarlo(100, 10**4, 5)
    with pytest.raises(ValueError):
        metrics.estimate_dosa_montecarlo(100, 9999, 5)
    with pytest.raises(ValueError):
        metrics.estimate_dosa_montecarlo(1.0, 10**4, 5)

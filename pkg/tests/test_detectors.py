"""KL channel detector and residual envelope detector.

The closed-form Gaussian KL is cross-checked against numerical
integration of the defining integral; the envelope pieces are checked
against hand-evaluated values of tau(k) and the norm-splitting factor.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from maswatch.detectors import (
    EdgeSampleStore,
    EnvelopeConfig,
    FactorMode,
    KlDetectorConfig,
    KlEstimator,
    channel_detector,
    edge_residual,
    envelope,
    envelope_factor,
    envelope_verdict,
    estimate_kl,
    gaussian_kl,
    kl_verdict,
    lemma1_bound,
)
from maswatch.dynamics import StateBounds


def kl_by_quadrature(mu_a, var_a, mu_b, var_b) -> float:
    sa, sb = math.sqrt(var_a), math.sqrt(var_b)

    def integrand(x):
        log_pa = -0.5 * ((x - mu_a) / sa) ** 2 - math.log(sa * math.sqrt(2 * math.pi))
        log_pb = -0.5 * ((x - mu_b) / sb) ** 2 - math.log(sb * math.sqrt(2 * math.pi))
        return math.exp(log_pa) * (log_pa - log_pb)

    lo = min(mu_a, mu_b) - 12 * max(sa, sb)
    hi = max(mu_a, mu_b) + 12 * max(sa, sb)
    val, _ = quad(integrand, lo, hi, limit=200)
    return val


# --- gaussian_kl ------------------------------------------------------------


def test_gaussian_kl_zero_for_identical():
    assert gaussian_kl(1.0, 2.0, 1.0, 2.0) == 0.0


def test_gaussian_kl_hand_value():
    # N(0,1) against N(0,4): 0.5 ln 4 + 1/8 - 1/2
    expect = 0.5 * math.log(4.0) + 1.0 / 8.0 - 0.5
    assert gaussian_kl(0.0, 1.0, 0.0, 4.0) == pytest.approx(expect)


def test_gaussian_kl_is_asymmetric():
    assert gaussian_kl(0.0, 1.0, 0.0, 4.0) != gaussian_kl(0.0, 4.0, 0.0, 1.0)


def test_gaussian_kl_sums_components():
    total = gaussian_kl([0.0, 1.0], [1.0, 2.0], [0.5, 1.0], [1.0, 3.0])
    parts = gaussian_kl(0.0, 1.0, 0.5, 1.0) + gaussian_kl(1.0, 2.0, 1.0, 3.0)
    assert total == pytest.approx(parts)


def test_gaussian_kl_validation():
    with pytest.raises(ValueError, match="share one shape"):
        gaussian_kl([0.0, 1.0], [1.0, 1.0], [0.0], [1.0])
    with pytest.raises(ValueError, match="positive"):
        gaussian_kl(0.0, 0.0, 0.0, 1.0)


def test_gaussian_kl_matches_quadrature():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(30):
        mu_a, mu_b = rng.uniform(-3, 3, size=2)
        var_a, var_b = rng.uniform(0.3, 4.0, size=2)
        closed = gaussian_kl(mu_a, var_a, mu_b, var_b)
        worst = max(worst, abs(closed - kl_by_quadrature(mu_a, var_a, mu_b, var_b)))
    assert worst < 1e-3


# --- estimate_kl ------------------------------------------------------------


def _cfg(**kw):
    return KlDetectorConfig(**kw)


def test_estimate_kl_zero_on_identical_sets():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(50, 3))
    assert estimate_kl(a, a.copy(), _cfg()) == 0.0


def test_estimate_kl_grows_with_mean_shift():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(200, 1))
    shifts = [0.5, 1.0, 2.0]
    vals = [estimate_kl(a, a + s, _cfg()) for s in shifts]
    assert vals[0] < vals[1] < vals[2]


def test_estimate_kl_validation():
    cfg = _cfg()
    with pytest.raises(ValueError, match="matching shapes"):
        estimate_kl(np.zeros((5, 2)), np.zeros((5, 3)), cfg)
    with pytest.raises(ValueError, match="two samples"):
        estimate_kl(np.zeros((1, 2)), np.zeros((1, 2)), cfg)


def test_histogram_estimator_agrees_in_sign():
    rng = np.random.default_rng(5)
    a = rng.normal(0.0, 1.0, size=(400, 1))
    b = rng.normal(3.0, 1.0, size=(400, 1))
    hist = estimate_kl(a, b, _cfg(estimator=KlEstimator.HISTOGRAM))
    gauss = estimate_kl(a, b, _cfg())
    assert hist > 1.0 and gauss > 1.0
    # identical sets collapse to zero under both estimators
    assert estimate_kl(a, a.copy(), _cfg(estimator=KlEstimator.HISTOGRAM)) == 0.0


def test_kl_config_validation():
    with pytest.raises(ValueError):
        KlDetectorConfig(theta=0.0)
    with pytest.raises(ValueError):
        KlDetectorConfig(min_samples=1)


def test_kl_verdict_boundary_stays_secure():
    cfg = _cfg(theta=4.61)
    assert not kl_verdict(4.61, cfg, (5, 2), 10).attacked
    assert kl_verdict(4.6100001, cfg, (5, 2), 10).attacked
    v = kl_verdict(0.0, cfg, (5, 2), 10)
    assert v.detector == "kl" and v.edge == (5, 2) and v.step == 10


def test_channel_detector_warmup():
    cfg = _cfg(min_samples=3)
    store = EdgeSampleStore()
    rng = np.random.default_rng(6)
    pair = (rng.normal(size=3), rng.normal(size=3) + 50.0)
    v1 = channel_detector(pair, store, cfg, (0, 1), 1)
    v2 = channel_detector(pair, store, cfg, (0, 1), 2)
    assert not v1.attacked and not v2.attacked
    assert v1.statistic == 0.0
    v3 = channel_detector(pair, store, cfg, (0, 1), 3)
    assert len(store) == 3
    assert v3.attacked  # the two sides differ by a huge offset


# --- envelope ---------------------------------------------------------------


def test_envelope_hand_values():
    cfg = EnvelopeConfig()
    assert envelope(1, cfg) == pytest.approx(100.0 * math.exp(-1.0))
    assert envelope(4, cfg) == pytest.approx(100.0 * math.exp(-(4.0 ** 0.84)))
    vals = [envelope(k, cfg) for k in range(1, 61)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        envelope(0, cfg)


def test_envelope_config_validation():
    with pytest.raises(ValueError):
        EnvelopeConfig(M_r=0.0)
    with pytest.raises(ValueError):
        EnvelopeConfig(phi=1.0)
    with pytest.raises(ValueError):
        EnvelopeConfig(lambda_min=0.0)


def test_edge_residual():
    y = np.array([[1.0, 0.0], [0.0, 2.0]])
    x = np.zeros((2, 2))
    assert edge_residual(y, x) == pytest.approx(1.5)
    with pytest.raises(ValueError, match="matching shapes"):
        edge_residual(np.zeros((2, 2)), np.zeros((3, 2)))


def test_envelope_factor_modes():
    b = StateBounds(-200.0, 1230.0)
    ratio = (200.0 ** 2 + 1230.0 ** 2) / 1230.0 ** 2
    assert envelope_factor(b, FactorMode.ALGORITHM2) == pytest.approx(math.sqrt(ratio))
    assert envelope_factor(b, FactorMode.PROPOSITION3) == pytest.approx(1.0 / math.sqrt(ratio))
    with pytest.raises(ValueError, match="eps2"):
        envelope_factor(StateBounds(-1.0, 0.0), FactorMode.ALGORITHM2)


def test_envelope_verdict_math():
    cfg = EnvelopeConfig()
    b = StateBounds(-200.0, 1230.0)
    factor = envelope_factor(b, cfg.factor_mode)
    d_ref = 30.0
    threshold = factor * d_ref * (envelope(5, cfg) + cfg.delta)
    v = envelope_verdict(0.5 * threshold, d_ref, 5, cfg, b, (5, 2))
    assert not v.attacked and v.statistic == pytest.approx(0.5)
    v = envelope_verdict(2.0 * threshold, d_ref, 5, cfg, b, (5, 2), msg_index=2)
    assert v.attacked and v.detector == "envelope2"
    # boundary ratio 1 is still secure
    assert not envelope_verdict(threshold, d_ref, 5, cfg, b, (5, 2)).attacked


def test_envelope_verdict_worked_example():
    # tau(1) = 1 when M_r = e, so the threshold is sqrt(2) * 10 * 7
    cfg = EnvelopeConfig(M_r=math.e, delta=6.0)
    b = StateBounds(-5.0, 5.0)
    threshold = math.sqrt(2.0) * 10.0 * 7.0
    assert threshold == pytest.approx(98.99, abs=0.01)
    assert envelope_verdict(99.0, 10.0, 1, cfg, b, (1, 2)).attacked
    assert not envelope_verdict(98.0, 10.0, 1, cfg, b, (1, 2)).attacked


def test_envelope_verdict_degenerate_reference():
    cfg = EnvelopeConfig()
    b = StateBounds(-1.0, 1.0)
    assert not envelope_verdict(0.0, 0.0, 3, cfg, b, (0, 1)).attacked
    v = envelope_verdict(1.0, 0.0, 3, cfg, b, (0, 1))
    assert v.attacked and math.isinf(v.statistic)
    with pytest.raises(ValueError, match="nonnegative"):
        envelope_verdict(-1.0, 1.0, 3, cfg, b, (0, 1))


# --- lemma 1 ----------------------------------------------------------------


def test_lemma1_bound_validation():
    with pytest.raises(ValueError, match="rho1 must be positive"):
        lemma1_bound([1.0], [1.0], 0.0, 2.0)
    with pytest.raises(ValueError, match="rho1 <= rho2"):
        lemma1_bound([1.0], [1.0], 2.0, 1.0)
    with pytest.raises(ValueError, match="share a shape"):
        lemma1_bound([1.0, 1.0], [1.0], 1.0, 2.0)
    with pytest.raises(ValueError, match="lie in"):
        lemma1_bound([3.0], [1.5], 1.0, 2.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(min_value=0.5, max_value=8.0), min_size=1, max_size=6),
    st.data(),
)
def test_lemma1_bound_holds(gamma, data):
    omega = data.draw(
        st.lists(
            st.floats(min_value=0.5, max_value=8.0),
            min_size=len(gamma),
            max_size=len(gamma),
        )
    )
    assert lemma1_bound(gamma, omega, 0.5, 8.0)


def test_lemma1_bound_tight_at_equal_components():
    # equality direction: gamma = omega = rho * ones makes lhs/rhs largest
    assert lemma1_bound(np.full(4, 1.0), np.full(4, 1.0), 1.0, 1.0)

"""Watermark material generation and the apply/remove round trip."""

from __future__ import annotations

import numpy as np
import pytest

from maswatch.watermark import (
    STREAM_NOISE,
    STREAM_WATERMARK,
    MessageSet,
    WatermarkDraw,
    WatermarkParams,
    apply_watermark,
    draw_watermark,
    edge_stream,
    identity_draw,
    remove_watermark,
    watermark_blocks,
)

PARAMS = WatermarkParams(
    lambda1=2.0, lambda2=5.0,
    sigma2_m1=7.2, sigma2_m2=4.3,
    sigma2_f1=2.0, sigma2_f2=3.5,
)


def test_params_validation():
    with pytest.raises(ValueError, match="lambda_r"):
        WatermarkParams(0.0, 5.0, 7.2, 4.3, 2.0, 3.5)
    with pytest.raises(ValueError, match="sigma2_f2"):
        WatermarkParams(2.0, 5.0, 7.2, 4.3, 2.0, -1.0)


def test_edge_stream_is_keyed_by_every_argument():
    base = edge_stream(1, 0, (5, 2), STREAM_WATERMARK).standard_normal(4)
    same = edge_stream(1, 0, (5, 2), STREAM_WATERMARK).standard_normal(4)
    assert np.array_equal(base, same)
    for other in (
        edge_stream(2, 0, (5, 2), STREAM_WATERMARK),
        edge_stream(1, 1, (5, 2), STREAM_WATERMARK),
        edge_stream(1, 0, (2, 5), STREAM_WATERMARK),
        edge_stream(1, 0, (5, 2), STREAM_NOISE),
    ):
        assert not np.array_equal(base, other.standard_normal(4))


def test_draw_is_deterministic_and_horizon_stable():
    d1 = draw_watermark((5, 2), 3, PARAMS, master_seed=7)
    d2 = draw_watermark((5, 2), 3, PARAMS, master_seed=7)
    assert np.array_equal(d1.m1, d2.m1) and np.array_equal(d1.f2, d2.f2)
    # the step-k draw must not depend on how far the block was generated
    rng = edge_stream(7, 0, (5, 2), STREAM_WATERMARK)
    m1, m2, f1, f2 = watermark_blocks(rng, 10, 3, PARAMS)
    assert np.array_equal(d1.m1, m1[2])
    assert np.array_equal(d1.m2, m2[2])
    assert np.array_equal(d1.f1, f1[2])
    assert np.array_equal(d1.f2, f2[2])


def test_draw_rejects_step_zero():
    with pytest.raises(ValueError, match="k >= 1"):
        draw_watermark((0, 1), 0, PARAMS, master_seed=7)


def test_removal_multipliers_exceed_lambda():
    rng = edge_stream(3, 0, (0, 1), STREAM_WATERMARK)
    m1, m2, _, _ = watermark_blocks(rng, 1000, 3, PARAMS)
    assert m1.min() > PARAMS.lambda1
    assert m2.min() > PARAMS.lambda2


def test_apply_remove_hand_numbers():
    draw = WatermarkDraw(
        m1=np.array([3.0]), m2=np.array([4.0]),
        f1=np.array([1.0]), f2=np.array([-2.0]),
    )
    ms = apply_watermark(np.array([2.0]), draw)
    assert ms.y1[0] == pytest.approx(2.0 / 3.0 + 1.0)
    assert ms.y2[0] == pytest.approx(2.0 / 4.0 - 2.0)
    y1, y2 = remove_watermark(ms, draw)
    assert y1[0] == pytest.approx(2.0)
    assert y2[0] == pytest.approx(2.0)


def test_roundtrip_bulk():
    """10^4 random messages recover to 1e-9 through both masks."""
    rng = edge_stream(99, 0, (1, 2), STREAM_WATERMARK)
    m1, m2, f1, f2 = watermark_blocks(rng, 10_000, 3, PARAMS)
    plains = np.random.default_rng(5).uniform(-200.0, 1200.0, size=(10_000, 3))
    y1 = plains / m1 + f1
    y2 = plains / m2 + f2
    back1 = m1 * (y1 - f1)
    back2 = m2 * (y2 - f2)
    assert np.max(np.abs(back1 - plains)) < 1e-9
    assert np.max(np.abs(back2 - plains)) < 1e-9


def test_roundtrip_through_dataclasses():
    rng = np.random.default_rng(17)
    for k in range(1, 101):
        draw = draw_watermark((4, 2), k, PARAMS, master_seed=31, trial=3)
        plain = rng.uniform(-50.0, 50.0, size=3)
        y1, y2 = remove_watermark(apply_watermark(plain, draw), draw)
        assert np.max(np.abs(y1 - plain)) < 1e-9
        assert np.max(np.abs(y2 - plain)) < 1e-9


def test_identity_draw_passthrough():
    draw = identity_draw(3)
    plain = np.array([1.0, -2.0, 3.0])
    ms = apply_watermark(plain, draw)
    assert np.array_equal(ms.y1, plain) and np.array_equal(ms.y2, plain)
    y1, y2 = remove_watermark(ms, draw)
    assert np.array_equal(y1, plain) and np.array_equal(y2, plain)
    assert draw.n == 3


def test_copies_differ_on_the_wire():
    draw = draw_watermark((0, 1), 1, PARAMS, master_seed=7)
    ms = apply_watermark(np.array([5.0, 5.0, 5.0]), draw)
    assert not np.allclose(ms.y1, ms.y2)
    assert isinstance(ms, MessageSet)

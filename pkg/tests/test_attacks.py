"""Attack schedules, admissibility and scenario validation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from maswatch.attacks import (
    AttackScenario,
    ByzantineBehavior,
    ChannelAttack,
    Schedule,
    active_attacks,
    byzantine_emit,
    stealth_admissible_set,
    tamper_channel,
    validate_attacks,
    validate_stealth,
)
from maswatch.dynamics import StateBounds
from maswatch.graph import LocalAttackBudget, build_topology
from maswatch.watermark import MessageSet


def _sin(*coeffs):
    return Schedule("sin", coeffs)


def _const(*coeffs):
    return Schedule("const", coeffs)


def section_iv_attack(window=(10, None)):
    # the channel attack used throughout the experiments
    return ChannelAttack(
        edge=(5, 2),
        window=window,
        xi1=_sin(1.0, 8.3, 2.4),
        lam1=_sin(0.0, 3.73, -1.32),
        xi2=_sin(0.0, 7.3, -2.32),
        lam2=_const(0.0, 0.0, 0.0),
    )


def test_schedule_kinds():
    k = 7
    assert np.allclose(_sin(2.0).eval(k), 2.0 * math.sin(7))
    assert np.allclose(Schedule("ramp", (0.5,)).eval(k), 3.5)
    assert np.allclose(_const(1.0, -1.0).eval(k), [1.0, -1.0])
    with pytest.raises(ValueError, match="unknown schedule kind"):
        Schedule("cos", (1.0,))


def test_window_validation():
    with pytest.raises(ValueError, match="start at step 1"):
        ChannelAttack((0, 1), (0, 5), _const(1.0), _const(0.0), _const(1.0), _const(0.0))
    with pytest.raises(ValueError, match="nonempty"):
        ByzantineBehavior(1, (5, 5), "constant_offset", offset=(1.0,))


def test_active_window_bounds():
    a = section_iv_attack(window=(10, 20))
    assert not a.active(9)
    assert a.active(10) and a.active(19)
    assert not a.active(20)
    assert section_iv_attack(window=(10, None)).active(10_000)


def test_byzantine_validation():
    with pytest.raises(ValueError, match="unknown byzantine kind"):
        ByzantineBehavior(1, (1, None), "teleport")
    with pytest.raises(ValueError, match="needs an offset"):
        ByzantineBehavior(1, (1, None), "constant_offset")
    with pytest.raises(ValueError, match="positive scale"):
        ByzantineBehavior(1, (1, None), "per_neighbor_random", scale=0.0)


def test_stealth_admissible_set_branches():
    assert stealth_admissible_set(StateBounds(2.0, 10.0)) == ((-1.0, 1.0), (0.0, 12.0))
    assert stealth_admissible_set(StateBounds(-10.0, -2.0)) == ((-1.0, 1.0), (-12.0, 0.0))
    assert stealth_admissible_set(StateBounds(-3.0, 8.0)) == ((-1.0, 1.0), (-3.0, 8.0))


def test_validate_stealth_flags_each_violation():
    b = StateBounds(-1.0, 1.0)
    a = ChannelAttack(
        edge=(0, 1),
        window=(1, 3),
        xi1=_const(2.0),  # outside [-1, 1]
        lam1=_const(0.0),
        xi2=_const(0.5),
        lam2=_const(0.0),
    )
    ok, bad = validate_stealth(a, b, horizon=10)
    assert not ok
    assert bad == [(1, "xi1", 2.0), (2, "xi1", 2.0)]


def test_validate_stealth_accepts_in_range():
    b = StateBounds(-200.0, 1230.0)
    a = ChannelAttack(
        edge=(0, 1),
        window=(1, None),
        xi1=_sin(0.9),
        lam1=_sin(3.0),
        xi2=_sin(-0.5),
        lam2=_const(0.0),
    )
    ok, bad = validate_stealth(a, b, horizon=40)
    assert ok and bad == []


def test_tamper_channel():
    ms = MessageSet(y1=np.array([1.0, 2.0, 3.0]), y2=np.array([1.0, 1.0, 1.0]))
    a = section_iv_attack(window=(10, None))
    assert tamper_channel(ms, a, 9) is ms
    out = tamper_channel(ms, a, 10)
    s = math.sin(10)
    assert np.allclose(out.y1, np.array([1.0, 8.3 * 2, 2.4 * 3]) * s + np.array([0.0, 3.73, -1.32]) * s)
    assert np.allclose(out.y2, np.array([0.0, 7.3, -2.32]) * s)


def test_byzantine_emit_kinds():
    x = np.array([1.0, 2.0, 3.0])
    const = ByzantineBehavior(5, (2, None), "constant_offset", offset=(10.0, 0.0, 0.0))
    assert np.array_equal(byzantine_emit(const, 1, x), x)
    assert np.array_equal(byzantine_emit(const, 2, x), [11.0, 2.0, 3.0])

    ramp = ByzantineBehavior(5, (1, None), "divergent_ramp", offset=(1.0, 0.0, 0.0))
    assert np.array_equal(byzantine_emit(ramp, 4, x), [5.0, 2.0, 3.0])

    frozen = ByzantineBehavior(5, (1, None), "frozen_state")
    cap = np.array([9.0, 9.0, 9.0])
    assert np.array_equal(byzantine_emit(frozen, 3, x, frozen_state=cap), cap)
    with pytest.raises(ValueError, match="captured state"):
        byzantine_emit(frozen, 3, x)

    rand = ByzantineBehavior(5, (1, None), "per_neighbor_random", scale=2.0)
    rng = np.random.default_rng(0)
    out = byzantine_emit(rand, 1, x, rng=rng)
    assert out.shape == x.shape and not np.array_equal(out, x)
    with pytest.raises(ValueError, match="needs a generator"):
        byzantine_emit(rand, 1, x)


def test_active_attacks_filters_by_step():
    chan = section_iv_attack(window=(10, 20))
    byz = ByzantineBehavior(5, (15, None), "constant_offset", offset=(1.0, 0.0, 0.0))
    s = AttackScenario(channel=(chan,), byzantine=(byz,))
    assert active_attacks(s, 9) == ([], [])
    assert active_attacks(s, 12) == ([chan], [])
    assert active_attacks(s, 16) == ([chan], [byz])
    assert active_attacks(s, 25) == ([], [byz])


def _topology():
    return build_topology(
        7,
        [(0, 2), (1, 2), (3, 2), (4, 2), (5, 2), (5, 1), (5, 3), (5, 4), (0, 1), (0, 5), (0, 6)],
    )


def test_validate_attacks_unknown_edge_and_agent():
    t = _topology()
    bad_edge = ChannelAttack((2, 5), (1, None), _const(1.0), _const(0.0), _const(1.0), _const(0.0))
    with pytest.raises(ValueError, match="unknown edge"):
        validate_attacks(AttackScenario(channel=(bad_edge,)), t, 10)
    bad_agent = ByzantineBehavior(9, (1, None), "constant_offset", offset=(1.0,))
    with pytest.raises(ValueError, match="unknown agent"):
        validate_attacks(AttackScenario(byzantine=(bad_agent,)), t, 10)


def test_validate_attacks_rejects_overlaps():
    t = _topology()
    a1 = section_iv_attack(window=(5, 15))
    a2 = section_iv_attack(window=(14, None))
    with pytest.raises(ValueError, match="overlap on edge"):
        validate_attacks(AttackScenario(channel=(a1, a2)), t, 30)
    # back to back windows are fine
    a3 = section_iv_attack(window=(15, None))
    assert validate_attacks(AttackScenario(channel=(a1, a3)), t, 30) is None

    b1 = ByzantineBehavior(5, (2, 8), "constant_offset", offset=(1.0, 0.0, 0.0))
    b2 = ByzantineBehavior(5, (7, None), "frozen_state")
    with pytest.raises(ValueError, match="overlap on agent"):
        validate_attacks(AttackScenario(byzantine=(b1, b2)), t, 30)


def test_validate_attacks_budget():
    t = _topology()
    budget = LocalAttackBudget(1, 1)
    chan = section_iv_attack(window=(10, None))
    byz = ByzantineBehavior(5, (20, None), "constant_offset", offset=(1000.0, 0.0, 0.0))
    ok = AttackScenario(channel=(chan,), byzantine=(byz,), budget=budget)
    assert validate_attacks(ok, t, 60) is None

    # two attacked channels into agent 2 breaks P = 1 at the overlap step
    extra = ChannelAttack((1, 2), (12, None), _const(1.0, 1.0, 1.0),
                          _const(0.0, 0.0, 0.0), _const(1.0, 1.0, 1.0), _const(0.0, 0.0, 0.0))
    over = AttackScenario(channel=(chan, extra), budget=budget)
    assert validate_attacks(over, t, 60) == (2, 12)

    # agent 2 hears two byzantine in-neighbors once both windows open
    byz2 = ByzantineBehavior(1, (25, None), "frozen_state")
    over2 = AttackScenario(byzantine=(byz, byz2), budget=budget)
    assert validate_attacks(over2, t, 60) == (2, 25)

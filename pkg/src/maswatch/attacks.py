"""Channel tampering and Byzantine agent behaviors.

A channel attack rewrites both transmitted copies on one edge inside
its step window:

    ybar_r -> Xi_r(k) * ybar_r + Lam_r(k)   componentwise

with schedules Xi, Lam drawn from small named templates. A Byzantine
agent instead lies at the source: it watermarks honestly but feeds a
corrupted state into its outgoing messages, so the watermark
round-trip stays exact and only the residual detector can see it.

Stealthiness against a plain consensus monitor constrains the
schedules through the nominal state range [eps1, eps2]: the
multiplier must stay in [-1, 1] and the offset inside the interval
determined by the signs of the bounds. The validator only warns the
caller; injection proceeds regardless so that detector experiments
can use non-stealthy attacks too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import StateBounds
from .graph import LocalAttackBudget, Topology
from .watermark import MessageSet

SCHEDULE_KINDS = ("sin", "const", "ramp")

BYZANTINE_KINDS = (
    "constant_offset",
    "divergent_ramp",
    "frozen_state",
    "per_neighbor_random",
)


@dataclass(frozen=True)
class Schedule:
    """Componentwise time profile c_l * g(k).

    kind selects g: "sin" -> sin(k), "const" -> 1, "ramp" -> k.
    coeffs is the per-component vector c.
    """

    kind: str
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}, expected one of {SCHEDULE_KINDS}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def eval(self, k: int) -> np.ndarray:
        c = np.array(self.coeffs)
        if self.kind == "sin":
            return c * math.sin(k)
        if self.kind == "ramp":
            return c * float(k)
        return c


def _window_ok(window):
    start, stop = window
    if start < 1:
        raise ValueError("attack windows start at step 1 or later")
    if stop is not None and stop <= start:
        raise ValueError("attack window must be nonempty")


@dataclass(frozen=True)
class ChannelAttack:
    """Man-in-the-middle rewrite of one edge's message set.

    window is [start, stop) in steps; stop None means until the end of
    the run. xi1/lam1 act on the first copy, xi2/lam2 on the second.
    """

    edge: tuple[int, int]
    window: tuple[int, int | None]
    xi1: Schedule
    lam1: Schedule
    xi2: Schedule
    lam2: Schedule

    def __post_init__(self):
        _window_ok(self.window)

    def active(self, k: int) -> bool:
        start, stop = self.window
        return k >= start and (stop is None or k < stop)


@dataclass(frozen=True)
class ByzantineBehavior:
    """Corruption of an agent's outgoing plaintext inside a window.

    kind:
      constant_offset     emit x + offset
      divergent_ramp      emit x + offset * k
      frozen_state        emit the state captured at the window start
      per_neighbor_random emit x + scale * z, z fresh per edge and step
    """

    agent: int
    window: tuple[int, int | None]
    kind: str
    offset: tuple[float, ...] = ()
    scale: float = 0.0

    def __post_init__(self):
        _window_ok(self.window)
        if self.kind not in BYZANTINE_KINDS:
            raise ValueError(f"unknown byzantine kind {self.kind!r}, expected one of {BYZANTINE_KINDS}")
        if self.kind in ("constant_offset", "divergent_ramp") and not self.offset:
            raise ValueError(f"{self.kind} needs an offset vector")
        if self.kind == "per_neighbor_random" and self.scale <= 0:
            raise ValueError("per_neighbor_random needs a positive scale")
        object.__setattr__(self, "offset", tuple(float(c) for c in self.offset))

    def active(self, k: int) -> bool:
        start, stop = self.window
        return k >= start and (stop is None or k < stop)


@dataclass(frozen=True)
class AttackScenario:
    """All attacks of one run plus the per-agent budget they must respect."""

    channel: tuple[ChannelAttack, ...] = ()
    byzantine: tuple[ByzantineBehavior, ...] = ()
    budget: LocalAttackBudget = field(default_factory=lambda: LocalAttackBudget(1, 1))

    def __post_init__(self):
        object.__setattr__(self, "channel", tuple(self.channel))
        object.__setattr__(self, "byzantine", tuple(self.byzantine))


def stealth_admissible_set(b: StateBounds) -> tuple[tuple[float, float], tuple[float, float]]:
    """Admissible (Xi, Lam) component ranges for the bounds b.

    The multiplier range is always [-1, 1]. The offset range keeps the
    tampered value inside the nominal state envelope:
      eps1 > 0       -> [0, eps1 + eps2]
      eps2 < 0       -> [eps1 + eps2, 0]
      eps1 <= 0 <= eps2 -> [eps1, eps2]
    """
    xi = (-1.0, 1.0)
    if b.eps1 > 0:
        lam = (0.0, b.eps1 + b.eps2)
    elif b.eps2 < 0:
        lam = (b.eps1 + b.eps2, 0.0)
    else:
        lam = (b.eps1, b.eps2)
    return xi, lam


def validate_stealth(
    a: ChannelAttack, b: StateBounds, horizon: int
) -> tuple[bool, list[tuple[int, str, float]]]:
    """Check every in-window step of a against the admissible set.

    Returns (ok, violations) where each violation is (step, field,
    value). The caller decides whether to warn or reject; a detector
    experiment may well want a non-stealthy attack.
    """
    (xi_lo, xi_hi), (lam_lo, lam_hi) = stealth_admissible_set(b)
    start, stop = a.window
    stop = horizon + 1 if stop is None else min(stop, horizon + 1)
    bad = []
    for k in range(start, stop):
        for name, sched, lo, hi in (
            ("xi1", a.xi1, xi_lo, xi_hi),
            ("xi2", a.xi2, xi_lo, xi_hi),
            ("lam1", a.lam1, lam_lo, lam_hi),
            ("lam2", a.lam2, lam_lo, lam_hi),
        ):
            vals = sched.eval(k)
            for v in np.atleast_1d(vals):
                if not lo <= v <= hi:
                    bad.append((k, name, float(v)))
    return (not bad, bad)


def tamper_channel(ms: MessageSet, a: ChannelAttack, k: int) -> MessageSet:
    """Apply the attack to one message set; identity outside the window."""
    if not a.active(k):
        return ms
    y1 = a.xi1.eval(k) * ms.y1 + a.lam1.eval(k)
    y2 = a.xi2.eval(k) * ms.y2 + a.lam2.eval(k)
    return MessageSet(y1=y1, y2=y2)


def byzantine_emit(
    bz: ByzantineBehavior,
    k: int,
    true_state: np.ndarray,
    frozen_state: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """State the Byzantine agent feeds into one outgoing message at step k."""
    x = np.asarray(true_state, dtype=float)
    if not bz.active(k):
        return x
    if bz.kind == "constant_offset":
        return x + np.array(bz.offset)
    if bz.kind == "divergent_ramp":
        return x + np.array(bz.offset) * float(k)
    if bz.kind == "frozen_state":
        if frozen_state is None:
            raise ValueError("frozen_state kind needs the captured state")
        return np.asarray(frozen_state, dtype=float)
    if rng is None:
        raise ValueError("per_neighbor_random kind needs a generator")
    return x + bz.scale * rng.standard_normal(x.shape[0])


def active_attacks(
    s: AttackScenario, k: int
) -> tuple[list[ChannelAttack], list[ByzantineBehavior]]:
    """Attacks in effect at step k."""
    return [a for a in s.channel if a.active(k)], [b for b in s.byzantine if b.active(k)]


def validate_attacks(
    s: AttackScenario, t: Topology, horizon: int
) -> tuple[int, int] | None:
    """Structural and budget validation of an attack scenario.

    Raises on malformed scenarios (unknown edge or agent, two channel
    attacks sharing an edge and a step, two behaviors sharing an agent
    and a step). Then checks the per-agent
    budget at every step: an agent may face at most L Byzantine
    in-neighbors and at most P attacked incoming channels. Returns the
    first offending (agent, step), or None when the budget holds.
    """
    for a in s.channel:
        if a.edge not in t.edges:
            raise ValueError(f"channel attack targets unknown edge {a.edge}")
    for bz in s.byzantine:
        if not 0 <= bz.agent < t.n_agents:
            raise ValueError(f"byzantine behavior targets unknown agent {bz.agent}")
    for idx, a in enumerate(s.channel):
        for b in s.channel[idx + 1 :]:
            if a.edge != b.edge:
                continue
            for k in range(1, horizon + 1):
                if a.active(k) and b.active(k):
                    raise ValueError(
                        f"two channel attacks overlap on edge {a.edge} at step {k}"
                    )
    for idx, a in enumerate(s.byzantine):
        for b in s.byzantine[idx + 1 :]:
            if a.agent != b.agent:
                continue
            for k in range(1, horizon + 1):
                if a.active(k) and b.active(k):
                    raise ValueError(
                        f"two byzantine behaviors overlap on agent {a.agent} at step {k}"
                    )
    for k in range(1, horizon + 1):
        chan_k, byz_k = active_attacks(s, k)
        byz_agents = {b.agent for b in byz_k}
        for i in range(t.n_agents):
            n_byz = sum(1 for j in t.in_neighbors(i) if j in byz_agents)
            if n_byz > s.budget.max_byzantine_neighbors:
                return (i, k)
            n_chan = sum(1 for a in chan_k if a.edge[1] == i)
            if n_chan > s.budget.max_attacked_channels:
                return (i, k)
    return None

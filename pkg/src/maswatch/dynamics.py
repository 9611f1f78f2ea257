"""Agent dynamics and the leader-follower consensus controller.

Every agent runs the same discrete-time linear model

    x_i(k+1) = A x_i(k) + B u_i(k)

with scalar input. The leader (agent 0) applies pure state feedback
u_0 = K1 x_0. Followers add a consensus term built from the states
received over incoming edges:

    u_i = K1 x_i + a(k) * sum_j a_ij * K2 (y_ij - x_i)

where y_ij is the recovered neighbor state (plaintext plus channel
noise once the watermark round-trip is clean) and a(k) = mu * k^(-lam)
is a decaying gain. The decay exponent trades convergence speed
against noise rejection; values in (1/2, 1) keep the noise term
square-summable while the gain itself is not summable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .graph import LEADER, Topology


@dataclass(frozen=True)
class AgentModel:
    """Discrete-time pair (A, B) with scalar input, B an (n,) column."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        b = np.asarray(self.B, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        if b.shape[0] != a.shape[0]:
            raise ValueError("B length must match A")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class ControllerParams:
    """Feedback gains and consensus schedule.

    K1: self-feedback row vector.
    K2: neighbor-error row vector.
    gain_mu, gain_lambda: a(k) = gain_mu * k**(-gain_lambda).
    noise_var: channel noise variance sigma_1^2 per state component.
    """

    K1: np.ndarray
    K2: np.ndarray
    gain_mu: float = 1.0
    gain_lambda: float = 0.6
    noise_var: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "K1", np.asarray(self.K1, dtype=float).reshape(-1))
        object.__setattr__(self, "K2", np.asarray(self.K2, dtype=float).reshape(-1))
        if self.gain_mu <= 0:
            raise ValueError("gain_mu must be positive")
        if not 0 < self.gain_lambda < 1:
            raise ValueError("gain_lambda must lie in (0, 1)")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")


@dataclass
class SystemState:
    """States of all agents at one step: states[i] is agent i's (n,) vector."""

    k: int
    states: np.ndarray  # (n_agents, n)

    def copy(self) -> "SystemState":
        return SystemState(self.k, self.states.copy())


@dataclass(frozen=True)
class StateBounds:
    """Componentwise state range over a nominal run, eps1 <= x_l(k) <= eps2.

    This is the knowledge granted to the attacker when reasoning about
    stealthiness, and it feeds the residual detector's norm inequality.
    """

    eps1: float
    eps2: float

    def __post_init__(self):
        if not self.eps1 <= self.eps2:
            raise ValueError("eps1 must not exceed eps2")


def companion_model(rho) -> AgentModel:
    """Companion-form pair: superdiagonal ones, last row rho, B = e_n."""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    n = rho.shape[0]
    if n < 1:
        raise ValueError("need at least one coefficient")
    a = np.zeros((n, n))
    for r in range(n - 1):
        a[r, r + 1] = 1.0
    a[n - 1, :] = rho
    b = np.zeros(n)
    b[n - 1] = 1.0
    return AgentModel(a, b)


def platoon_model(delta: float = 1.2, T: float = 1.0) -> AgentModel:
    """Vehicle model with state (position, velocity, acceleration).

    Euler discretization of p' = v, v' = a, a' = -a/delta + u/delta
    with the input folded into the gain, giving

        A = I + T * [[0,1,0],[0,0,1],[0,0,-1/delta]],  B = (0,0,1).
    """
    if delta <= 0 or T <= 0:
        raise ValueError("delta and T must be positive")
    a = np.eye(3) + T * np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / delta]])
    return AgentModel(a, np.array([0.0, 0.0, 1.0]))


def companion_gains(rho, b) -> tuple[np.ndarray, np.ndarray]:
    """Gain pair for the companion model.

    K1 cancels the open-loop row and re-inserts the target coefficients
    so A + B K1 keeps a single eigenvalue at one (the consensus
    direction) with the rest placed by the b polynomial:

        K1 = [-rho_1 + b_1, -rho_2 + b_2 - b_1, ..., -rho_n - b_{n-1} + 1]
        K2 = [b_1, ..., b_{n-1}, 1]

    The roots of s^{n-1} + b_{n-1} s^{n-2} + ... + b_1 must lie inside
    the unit circle; a violation is reported as a warning and the gains
    are still returned.
    """
    rho = np.asarray(rho, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = rho.shape[0]
    if b.shape[0] != n - 1:
        raise ValueError(f"need {n - 1} b-coefficients for order {n}")
    k1 = np.empty(n)
    k1[0] = -rho[0] + (b[0] if n > 1 else 1.0)
    for r in range(1, n - 1):
        k1[r] = -rho[r] + b[r] - b[r - 1]
    if n > 1:
        k1[n - 1] = -rho[n - 1] - b[n - 2] + 1.0
    k2 = np.concatenate([b, [1.0]])
    if n > 1:
        # roots of s^{n-1} + b_{n-1} s^{n-2} + ... + b_1
        poly = np.concatenate([[1.0], b[::-1]])
        roots = np.roots(poly)
        if np.any(np.abs(roots) >= 1.0):
            warnings.warn(
                "b polynomial has roots on or outside the unit circle; "
                "the follower error dynamics will not contract",
                stacklevel=2,
            )
    return k1, k2


def noise_gain(k: int, p: ControllerParams) -> float:
    """Decaying consensus gain a(k); the k = 0 boundary maps to a(1)."""
    if k < 0:
        raise ValueError("step must be nonnegative")
    k = max(k, 1)
    return p.gain_mu * float(k) ** (-p.gain_lambda)


def compute_control(
    i: int,
    x_i: np.ndarray,
    received: dict[int, np.ndarray],
    k: int,
    t: Topology,
    p: ControllerParams,
) -> float:
    """Scalar control for agent i at step k.

    received maps in-neighbor id to the recovered state vector. The
    leader ignores neighbors; followers need a message from every
    in-neighbor.
    """
    x_i = np.asarray(x_i, dtype=float)
    u = float(p.K1 @ x_i)
    if i == LEADER:
        return u
    acc = 0.0
    for j in t.in_neighbors(i):
        if j not in received:
            raise ValueError(f"agent {i} is missing the message from in-neighbor {j}")
        acc += t.weight(j, i) * float(p.K2 @ (np.asarray(received[j], dtype=float) - x_i))
    return u + noise_gain(k, p) * acc


def step_system(s: SystemState, controls: np.ndarray, model: AgentModel) -> SystemState:
    """Advance every agent one step under its scalar control."""
    controls = np.asarray(controls, dtype=float).reshape(-1)
    if controls.shape[0] != s.states.shape[0]:
        raise ValueError("one control per agent required")
    nxt = s.states @ model.A.T + np.outer(controls, model.B)
    return SystemState(s.k + 1, nxt)


def transient_metric(trajectories: np.ndarray, k: int) -> float:
    """Worst-agent mean relative tracking error at step k.

        eta(k) = max_i mean_trials ||x_i(k) - x_0(k)|| / ||x_0(k)||

    trajectories has shape (trials, steps+1, n_agents, n). Returns NaN
    when the leader norm vanishes in any trial at step k; such steps are
    undefined and excluded from threshold searches.
    """
    trajectories = np.asarray(trajectories, dtype=float)
    if trajectories.ndim != 4:
        raise ValueError("trajectories must be (trials, steps+1, agents, n)")
    snap = trajectories[:, k, :, :]
    leader = snap[:, LEADER, :]
    leader_norm = np.linalg.norm(leader, axis=1)
    if np.any(leader_norm == 0.0):
        return math.nan
    rel = np.linalg.norm(snap - leader[:, None, :], axis=2) / leader_norm[:, None]
    per_agent = rel.mean(axis=0)
    return float(per_agent[[a for a in range(snap.shape[1]) if a != LEADER]].max())


def eta_curve(trajectories: np.ndarray) -> np.ndarray:
    """transient_metric evaluated at every recorded step."""
    steps = np.asarray(trajectories).shape[1]
    return np.array([transient_metric(trajectories, k) for k in range(steps)])


def settling_step(eta: np.ndarray, varsigma: float) -> int | None:
    """First step after which eta stays below varsigma (NaN steps skipped)."""
    eta = np.asarray(eta, dtype=float)
    ok = (eta < varsigma) | np.isnan(eta)
    for k in range(eta.shape[0]):
        if ok[k:].all() and not math.isnan(eta[k]):
            return k
    return None


def compute_state_bounds(trajectories: np.ndarray) -> StateBounds:
    """Componentwise min and max over agents, steps, trials of a run."""
    arr = np.asarray(trajectories, dtype=float)
    return StateBounds(eps1=float(arr.min()), eps2=float(arr.max()))

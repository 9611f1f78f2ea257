"""Monte Carlo simulation driver.

Builds the dense attack and watermark arrays the kernels consume,
splits trials across workers, and returns the raw slabs (states and
recovered message pairs) that the detector pipeline pools.

Every random stream is derived counter-style from
(master_seed, trial, edge, stream tag), so results are a pure function
of the scenario and seed: chunking trials across workers, or swapping
the numba kernel for the numpy one, cannot change which numbers are
drawn.

Environment knobs:
    MASWATCH_BACKEND = numba | numpy   kernel selection (default: numba
                                       when importable, else numpy)
    MASWATCH_WORKERS = <int>           worker thread count (default 1)
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .attacks import AttackScenario, validate_attacks
from .dynamics import AgentModel, ControllerParams, noise_gain
from .graph import Topology
from .watermark import (
    STREAM_BYZANTINE,
    STREAM_NOISE,
    STREAM_WATERMARK,
    WatermarkParams,
    edge_stream,
    watermark_blocks,
)

BACKEND_ENV = "MASWATCH_BACKEND"
WORKERS_ENV = "MASWATCH_WORKERS"

_BYZ_CODE = {
    "constant_offset": _kernels.BYZ_CONST,
    "divergent_ramp": _kernels.BYZ_RAMP,
    "frozen_state": _kernels.BYZ_FROZEN,
    "per_neighbor_random": _kernels.BYZ_RANDOM,
}


def resolve_backend(backend: str | None = None) -> str:
    """Pick the kernel implementation: explicit arg, env var, then auto."""
    choice = backend or os.environ.get(BACKEND_ENV) or ("numba" if _kernels.HAS_NUMBA else "numpy")
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}, expected 'numba' or 'numpy'")
    if choice == "numba" and not _kernels.HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return choice


def resolve_workers(workers: int | None = None) -> int:
    w = workers if workers is not None else int(os.environ.get(WORKERS_ENV, "1"))
    if w < 1:
        raise ValueError("worker count must be at least 1")
    return w


@dataclass
class SimData:
    """Raw simulation output.

    states  (trials, steps+1, agents, n)  agent states, index 0 initial
    ystar1  (trials, steps, edges, n)     first recovered copy, step k
    ystar2  (trials, steps, edges, n)     second recovered copy
    Edge axis order follows Topology.edges. The message at step index
    k-1 carries the sender state of snapshot k-1; the controller that
    consumes it produces snapshot k.
    """

    states: np.ndarray
    ystar1: np.ndarray
    ystar2: np.ndarray
    topology: Topology

    @property
    def trials(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1


def _schedule_arrays(t: Topology, attacks: AttackScenario, horizon: int, n: int):
    """Densify attack schedules over (step, edge)."""
    E = t.n_edges
    chan_mask = np.zeros((horizon, E), dtype=np.uint8)
    xi1 = np.ones((horizon, E, n))
    lam1 = np.zeros((horizon, E, n))
    xi2 = np.ones((horizon, E, n))
    lam2 = np.zeros((horizon, E, n))
    for a in attacks.channel:
        e = t.edge_index(*a.edge)
        for k in range(1, horizon + 1):
            if not a.active(k):
                continue
            chan_mask[k - 1, e] = 1
            xi1[k - 1, e] = a.xi1.eval(k)
            lam1[k - 1, e] = a.lam1.eval(k)
            xi2[k - 1, e] = a.xi2.eval(k)
            lam2[k - 1, e] = a.lam2.eval(k)
    byz_mask = np.zeros((horizon, E), dtype=np.uint8)
    byz_kind = np.zeros((horizon, E), dtype=np.int8)
    byz_coeff = np.zeros((horizon, E, n))
    rand_edges = np.zeros(E, dtype=bool)
    rand_scale = np.zeros(E)
    for bz in attacks.byzantine:
        code = _BYZ_CODE[bz.kind]
        for i in t.out_neighbors(bz.agent):
            e = t.edge_index(bz.agent, i)
            for k in range(1, horizon + 1):
                if not bz.active(k):
                    continue
                byz_mask[k - 1, e] = 1
                byz_kind[k - 1, e] = code
                if bz.offset:
                    byz_coeff[k - 1, e] = np.array(bz.offset)
            if bz.kind == "per_neighbor_random":
                rand_edges[e] = True
                rand_scale[e] = bz.scale
    return chan_mask, xi1, lam1, xi2, lam2, byz_mask, byz_kind, byz_coeff, rand_edges, rand_scale


def _pregenerate(
    trial_ids: np.ndarray,
    t: Topology,
    horizon: int,
    n: int,
    master_seed: int,
    noise_var: float,
    wm: WatermarkParams,
    identity_watermark: bool,
    rand_edges: np.ndarray,
    rand_scale: np.ndarray,
):
    Tc = trial_ids.shape[0]
    E = t.n_edges
    shape = (Tc, horizon, E, n)
    W = np.zeros(shape)
    M1 = np.ones(shape)
    M2 = np.ones(shape)
    F1 = np.zeros(shape)
    F2 = np.zeros(shape)
    byz_rand = np.zeros(shape)
    sig = np.sqrt(noise_var)
    for ti, trial in enumerate(trial_ids):
        for e, edge in enumerate(t.edges):
            if noise_var > 0:
                rng = edge_stream(master_seed, int(trial), edge, STREAM_NOISE)
                W[ti, :, e, :] = sig * rng.standard_normal((horizon, n))
            if not identity_watermark:
                rng = edge_stream(master_seed, int(trial), edge, STREAM_WATERMARK)
                m1, m2, f1, f2 = watermark_blocks(rng, horizon, n, wm)
                M1[ti, :, e, :] = m1
                M2[ti, :, e, :] = m2
                F1[ti, :, e, :] = f1
                F2[ti, :, e, :] = f2
            if rand_edges[e]:
                rng = edge_stream(master_seed, int(trial), edge, STREAM_BYZANTINE)
                byz_rand[ti, :, e, :] = rand_scale[e] * rng.standard_normal((horizon, n))
    return W, M1, M2, F1, F2, byz_rand


def simulate(
    t: Topology,
    model: AgentModel,
    ctrl: ControllerParams,
    wm: WatermarkParams,
    attacks: AttackScenario,
    horizon: int,
    trials: int,
    master_seed: int,
    init_states: np.ndarray,
    identity_watermark: bool = False,
    backend: str | None = None,
    workers: int | None = None,
) -> SimData:
    """Run the full Monte Carlo batch and return the raw slabs."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if trials < 1:
        raise ValueError("need at least one trial")
    init_states = np.asarray(init_states, dtype=float)
    if init_states.shape != (t.n_agents, model.n):
        raise ValueError(
            f"init_states must be ({t.n_agents}, {model.n}), got {init_states.shape}"
        )
    offender = validate_attacks(attacks, t, horizon)
    if offender is not None:
        agent, step = offender
        raise ValueError(
            f"attack scenario exceeds the local budget at agent {agent}, step {step}"
        )
    backend = resolve_backend(backend)
    workers = resolve_workers(workers)
    n = model.n
    N = t.n_agents
    E = t.n_edges
    K = horizon
    states = np.zeros((trials, K + 1, N, n))
    ys1 = np.zeros((trials, K, E, n))
    ys2 = np.zeros((trials, K, E, n))
    if K == 0:
        states[:, 0] = init_states
        return SimData(states=states, ystar1=ys1, ystar2=ys2, topology=t)
    (
        chan_mask,
        xi1,
        lam1,
        xi2,
        lam2,
        byz_mask,
        byz_kind,
        byz_coeff,
        rand_edges,
        rand_scale,
    ) = _schedule_arrays(t, attacks, K, n)
    ak = np.array([noise_gain(k, ctrl) for k in range(K + 1)])
    edge_src = np.array([j for j, _ in t.edges], dtype=np.int64)
    edge_dst = np.array([i for _, i in t.edges], dtype=np.int64)
    edge_w = np.array(t.weights)
    kernel = _kernels._simulate_loop_jit if backend == "numba" else _kernels._simulate_numpy

    def run_chunk(trial_ids: np.ndarray) -> None:
        W, M1, M2, F1, F2, byz_rand = _pregenerate(
            trial_ids,
            t,
            K,
            n,
            master_seed,
            ctrl.noise_var,
            wm,
            identity_watermark,
            rand_edges,
            rand_scale,
        )
        lo, hi = int(trial_ids[0]), int(trial_ids[-1]) + 1
        kernel(
            init_states,
            model.A,
            model.B,
            ctrl.K1,
            ctrl.K2,
            ak,
            edge_src,
            edge_dst,
            edge_w,
            W,
            M1,
            M2,
            F1,
            F2,
            chan_mask,
            xi1,
            lam1,
            xi2,
            lam2,
            byz_mask,
            byz_kind,
            byz_coeff,
            byz_rand,
            states[lo:hi],
            ys1[lo:hi],
            ys2[lo:hi],
        )

    chunks = [c for c in np.array_split(np.arange(trials), workers) if c.size]
    if len(chunks) == 1:
        run_chunk(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run_chunk, chunks))
    return SimData(states=states, ystar1=ys1, ystar2=ys2, topology=t)

"""Leader-follower multi-agent simulation with watermark-based channel
attack detection, residual envelope Byzantine detection, and a two-bit
flag protocol separating the two."""

__version__ = "0.1.0"

from .attacks import (
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
from .detectors import (
    EdgeSampleStore,
    EdgeVerdict,
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
from .dynamics import (
    AgentModel,
    ControllerParams,
    StateBounds,
    SystemState,
    companion_gains,
    companion_model,
    compute_control,
    compute_state_bounds,
    eta_curve,
    noise_gain,
    platoon_model,
    settling_step,
    step_system,
    transient_metric,
)
from .engine import SimData, simulate
from .graph import (
    LocalAttackBudget,
    Topology,
    build_topology,
    check_hybrid_detectability,
    count_directed_two_hop_paths,
    grounded_laplacian_min_eigenvalue,
    has_spanning_tree,
    laplacian,
)
from .harness import (
    RunReport,
    Scenario,
    ScenarioError,
    export_report,
    load_scenario,
    platoon_preset,
    run_monte_carlo,
    transient_sweep,
)
from .hybrid import (
    Classification,
    FlagBoard,
    FlagPair,
    broadcast_flags,
    classify,
    local_detect,
    run_protocol_step,
    select_trusted,
)
from .watermark import (
    MessageSet,
    WatermarkDraw,
    WatermarkParams,
    apply_watermark,
    draw_watermark,
    identity_draw,
    remove_watermark,
)

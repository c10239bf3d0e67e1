"""Collective decision-making simulator for two-site nest choice.

Mean-field SDE models of colony commitment, an agent-based
explore/tandem/transport counterpart, and the analysis tooling to
measure speed-accuracy tradeoffs, quorum decisions, drift structure and
sequential-test behavior across decision thresholds.
"""

__version__ = "0.1.0"

from cdmsim.dynamics import (  # noqa: F401
    ColonyState,
    GainModel,
    ModelParams,
    NOISE_CHANNELS,
    deriv_baseline,
    deriv_modified,
    gain,
    transport_probability,
)
from cdmsim.sde import IntegratorConfig, Trajectory, simulate, step  # noqa: F401
from cdmsim.agents import Agent, World, agent_step, run_colony  # noqa: F401
from cdmsim.analysis import (  # noqa: F401
    DecisionOutcome,
    SpeedAccuracyPoint,
    SprtState,
    detect_decision,
    deriv_transformed,
    estimate_drift,
    fit_step_polynomial,
    inverse_transform,
    speed_accuracy_sweep,
    sprt_decide,
    sprt_update,
    transform_to_xy,
)
from cdmsim.config_io import ExperimentConfig, RunManifest, parse_config  # noqa: F401

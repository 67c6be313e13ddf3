"""Computation offloading for an energy-harvesting mobile device served by
an edge server: per-slot optimal online control, greedy baselines, a
discrete-time simulator, a brute-force optimality certifier, and analytical
performance bounds.
"""

from .model import (
    BoundConstants,
    Decision,
    InfeasibleDelayError,
    InvalidChannelError,
    InvalidParameterError,
    Mode,
    SlotOutcome,
    SlotState,
    SystemParams,
    bound_constants,
    derive_workload,
    e_tilde_max,
    mobile_delay_energy,
    rate,
    server_delay_energy,
    slot_cost,
    theta_min,
)
from .stochastic import ProcessConfig, RandomSource, SlotSampler, sample_slot, sample_trace
from .solver import (
    ConvergenceError,
    ModeEvaluation,
    NoRootError,
    RootFindConfig,
    decide,
    monotone_root,
    optimal_harvest,
    solve_mobile,
    solve_server,
)
from .policies import PolicyKind, policy_decide
from .engine import (
    RunMetrics,
    SimulationInvariantError,
    SweepCell,
    SweepTemplate,
    Trace,
    reduce,
    run,
    sweep,
)
from .oracle import CertifyReport, GridSpec, certify, grid_decide
from .cli import ConfigError, ExperimentConfig, build_params, load_config, preset

__version__ = "0.1.0"

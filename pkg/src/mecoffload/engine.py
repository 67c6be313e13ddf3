"""Time-slot simulation: drive a policy through sampled slots, record the
trace, reduce traces to metrics, and schedule parameter sweeps.

Every run enforces the hard runtime invariants on every slot (energy
causality, discharge caps, deadlines, and for "lodco" the harvest rule and
battery confinement); a violation is a bug in a policy or the solver, never
data, and raises :class:`SimulationInvariantError`.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .model import (
    Decision,
    InvalidParameterError,
    Mode,
    SlotOutcome,
    SlotState,
    SystemParams,
    e_tilde_max,
)
from .policies import PolicyKind, policy_decide
from .solver import DEFAULT_ROOT_CONFIG, RootFindConfig, transmit_delay
from .stochastic import ProcessConfig, sample_trace

__all__ = [
    "SimulationInvariantError",
    "Trace",
    "RunMetrics",
    "SweepTemplate",
    "SweepCell",
    "SWEEP_AXES",
    "run",
    "reduce",
    "sweep",
    "apply_axis",
]

SWEEP_AXES = ("v", "e_min", "rho", "p_h", "tau_d", "d")

_MODE_BY_CODE = (Mode.MOBILE, Mode.SERVER, Mode.DROP)
_CODE_BY_MODE = {mode: code for code, mode in enumerate(_MODE_BY_CODE)}
_DROP_CODE = _CODE_BY_MODE[Mode.DROP]


class SimulationInvariantError(RuntimeError):
    """A policy produced a decision that breaks a hard runtime invariant."""


def params_digest(params: SystemParams) -> str:
    """Short stable fingerprint of a parameter set, for run metadata."""
    text = ",".join(f"{f.name}={getattr(params, f.name)!r}" for f in fields(params))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Trace:
    """Column-wise record of one run; row ``t`` covers slot ``t``.

    ``b[t+1] == b_next[t]`` exactly; reconstruct object records on demand
    through :meth:`record` or :meth:`records`.
    """

    kind: PolicyKind
    seed: int
    t_slots: int
    params: SystemParams
    digest: str
    zeta: np.ndarray
    h: np.ndarray
    e_h: np.ndarray
    b: np.ndarray
    mode: np.ndarray          # int8 codes: 0 mobile, 1 server, 2 drop
    f: np.ndarray
    p: np.ndarray
    e: np.ndarray
    cost: np.ndarray
    delay: np.ndarray
    energy_used: np.ndarray
    b_next: np.ndarray

    def __len__(self) -> int:
        return self.t_slots

    def mode_at(self, t: int) -> Mode:
        return _MODE_BY_CODE[self.mode[t]]

    def record(self, t: int) -> tuple[SlotState, Decision, SlotOutcome]:
        state = SlotState(t=t, zeta=int(self.zeta[t]), h=float(self.h[t]),
                          e_h=float(self.e_h[t]), b=float(self.b[t]))
        decision = Decision(mode=self.mode_at(t), f=float(self.f[t]),
                            p=float(self.p[t]), e=float(self.e[t]))
        outcome = SlotOutcome(cost=float(self.cost[t]), delay=float(self.delay[t]),
                              energy_used=float(self.energy_used[t]),
                              energy_harvested=float(self.e[t]),
                              b_next=float(self.b_next[t]))
        return state, decision, outcome

    def records(self) -> Iterator[tuple[SlotState, Decision, SlotOutcome]]:
        for t in range(self.t_slots):
            yield self.record(t)

    def battery_trajectory(self) -> np.ndarray:
        """Battery levels B^0 .. B^T (length t_slots + 1)."""
        return np.append(self.b, self.b_next[-1])


def run(
    kind: PolicyKind,
    params: SystemParams,
    t_slots: int,
    seed: int,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> Trace:
    """Simulate ``t_slots`` slots of one policy from an empty battery.

    Deterministic in (kind, params, t_slots, seed).
    """
    if t_slots < 1:
        raise InvalidParameterError(f"t_slots must be >= 1, got {t_slots}")
    zeta_arr, h_arr, eh_arr = sample_trace(seed, ProcessConfig.from_params(params), t_slots)
    b_col = np.empty(t_slots)
    mode_col = np.empty(t_slots, dtype=np.int8)
    f_col = np.zeros(t_slots)
    p_col = np.zeros(t_slots)
    e_col = np.empty(t_slots)
    cost_col = np.zeros(t_slots)
    delay_col = np.zeros(t_slots)
    used_col = np.zeros(t_slots)
    bnext_col = np.empty(t_slots)

    d = params.derived
    theta = params.theta
    b_cap = d.b_cap
    phi = params.phi
    is_lodco = kind is PolicyKind.LODCO
    b = 0.0
    for t in range(t_slots):
        zeta = int(zeta_arr[t])
        h = float(h_arr[t])
        e_h = float(eh_arr[t])
        state = SlotState(t, zeta, h, e_h, b)
        dec = policy_decide(kind, state, params, cfg)
        mode = dec.mode
        if mode is Mode.DROP:
            delay = 0.0
            used = 0.0
            cost = phi if zeta else 0.0
        elif mode is Mode.MOBILE:
            delay = d.w / dec.f
            used = d.kw * dec.f * dec.f
            cost = delay
        else:
            delay = transmit_delay(h, dec.p, params)
            used = dec.p * delay
            cost = delay
        b_next = b - used + dec.e

        # Hard invariants: any failure is a policy/solver bug, not data.
        if zeta == 0 and mode is not Mode.DROP:
            raise SimulationInvariantError(f"slot {t}: executed without a task request")
        if used > b:
            raise SimulationInvariantError(
                f"slot {t}: energy causality violated: used {used!r} > battery {b!r}")
        if used != 0.0:
            if used > params.e_max:
                raise SimulationInvariantError(
                    f"slot {t}: discharge cap violated: used {used!r} > e_max {params.e_max!r}")
            if delay > params.tau_d:
                raise SimulationInvariantError(
                    f"slot {t}: deadline violated: delay {delay!r} > tau_d {params.tau_d!r}")
            if is_lodco and used < params.e_min:
                raise SimulationInvariantError(
                    f"slot {t}: battery output {used!r} below e_min {params.e_min!r}")
        if is_lodco:
            expected_e = e_h if b <= theta else 0.0
            if dec.e != expected_e:
                raise SimulationInvariantError(
                    f"slot {t}: harvest rule violated: harvested {dec.e!r}, expected {expected_e!r}")
            if b_next > b_cap:
                raise SimulationInvariantError(
                    f"slot {t}: battery exceeded theta + eh_max: {b_next!r} > {b_cap!r}")
        elif dec.e != e_h:
            raise SimulationInvariantError(
                f"slot {t}: greedy policy must harvest everything, got {dec.e!r} of {e_h!r}")
        if b_next < 0.0:
            raise SimulationInvariantError(f"slot {t}: battery went negative: {b_next!r}")

        b_col[t] = b
        mode_col[t] = _CODE_BY_MODE[mode]
        f_col[t] = dec.f
        p_col[t] = dec.p
        e_col[t] = dec.e
        cost_col[t] = cost
        delay_col[t] = delay
        used_col[t] = used
        bnext_col[t] = b_next
        b = b_next

    return Trace(kind=kind, seed=seed, t_slots=t_slots, params=params,
                 digest=params_digest(params), zeta=zeta_arr, h=h_arr, e_h=eh_arr,
                 b=b_col, mode=mode_col, f=f_col, p=p_col, e=e_col,
                 cost=cost_col, delay=delay_col, energy_used=used_col,
                 b_next=bnext_col)


@dataclass
class RunMetrics:
    """Scalar reductions of one trace (plus the running cost average)."""

    slots: int
    requested: int
    executed: int
    dropped: int
    avg_cost: float                         # mean cost over all counted slots
    avg_completion: Optional[float]         # mean delay of executed tasks
    drop_ratio: Optional[float]             # dropped / requested
    mode_shares: Optional[dict[str, float]]  # of requested tasks, by mode
    battery_min: float
    battery_max: float
    running_avg_cost: Optional[np.ndarray] = None

    def scalars(self) -> dict:
        """Emission-friendly view without the series."""
        shares = self.mode_shares or {}
        return {
            "slots": self.slots,
            "requested": self.requested,
            "executed": self.executed,
            "dropped": self.dropped,
            "avg_cost": self.avg_cost,
            "avg_completion": self.avg_completion,
            "drop_ratio": self.drop_ratio,
            "mode_share_mobile": shares.get("mobile"),
            "mode_share_server": shares.get("server"),
            "mode_share_drop": shares.get("drop"),
            "battery_min": self.battery_min,
            "battery_max": self.battery_max,
        }


def reduce(trace: Trace, warmup: int = 0, keep_series: bool = True) -> RunMetrics:
    """Reduce a trace to run metrics, optionally skipping a warm-up prefix.

    With no requested task in the counted window, drop_ratio, avg_completion
    and mode_shares are absent (None), not zero.
    """
    if not 0 <= warmup < trace.t_slots:
        raise InvalidParameterError(
            f"warmup must be in [0, {trace.t_slots}), got {warmup}")
    sl = slice(warmup, None)
    cost = trace.cost[sl]
    n = cost.size
    requested_mask = trace.zeta[sl] != 0
    executed_mask = requested_mask & (trace.mode[sl] != _DROP_CODE)
    requested = int(requested_mask.sum())
    executed = int(executed_mask.sum())
    dropped = requested - executed
    mode_shares = None
    if requested > 0:
        modes = trace.mode[sl]
        mode_shares = {
            mode.value: int(((modes == code) & requested_mask).sum()) / requested
            for code, mode in enumerate(_MODE_BY_CODE)
        }
    battery = np.append(trace.b[sl], trace.b_next[-1])
    return RunMetrics(
        slots=n,
        requested=requested,
        executed=executed,
        dropped=dropped,
        avg_cost=float(cost.mean()),
        avg_completion=float(trace.delay[sl][executed_mask].mean()) if executed else None,
        drop_ratio=dropped / requested if requested else None,
        mode_shares=mode_shares,
        battery_min=float(battery.min()),
        battery_max=float(battery.max()),
        running_avg_cost=np.cumsum(cost) / np.arange(1, n + 1) if keep_series else None,
    )


@dataclass(frozen=True)
class SweepTemplate:
    """Base parameters plus the raw inputs some sweep axes re-derive.

    ``g0`` (path-loss constant) feeds the distance axis, ``tau`` in the base
    parameters feeds the harvesting-rate axis.  Unless ``theta_override`` is
    set, theta is recomputed at its lower bound for every cell, so cells
    that change v or e_min remain valid.
    """

    base: SystemParams
    g0: float
    theta_override: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.g0 > 0.0:
            raise InvalidParameterError(f"g0 must be positive, got {self.g0}")


def apply_axis(template: SweepTemplate, axis: str, value: float) -> SystemParams:
    """Parameter set for one sweep cell; validates axis before any run."""
    if axis not in SWEEP_AXES:
        raise InvalidParameterError(
            f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    base = template.base
    changes: dict[str, float] = {}
    if axis == "v":
        changes["v"] = value
    elif axis == "e_min":
        changes["e_min"] = value
    elif axis == "rho":
        changes["rho"] = value
    elif axis == "tau_d":
        changes["tau_d"] = value
    elif axis == "p_h":
        changes["eh_max"] = 2.0 * value * base.tau
    elif axis == "d":
        if not value > 0.0:
            raise InvalidParameterError(f"distance must be positive, got {value}")
        changes["h_mean"] = template.g0 * value ** -4.0
    v = changes.get("v", base.v)
    e_min = changes.get("e_min", base.e_min)
    if template.theta_override is not None:
        theta = template.theta_override
    else:
        theta = e_tilde_max(base) + v * base.phi / e_min
    return replace(base, theta=theta, **changes)


@dataclass
class SweepCell:
    """One (policy, axis value, seed) run of a sweep."""

    kind: PolicyKind
    axis: str
    value: float
    seed: int
    params: SystemParams
    metrics: RunMetrics


def _run_cell(args) -> RunMetrics:
    kind, params, t_slots, seed, cfg, warmup, keep_series = args
    trace = run(kind, params, t_slots, seed, cfg)
    return reduce(trace, warmup, keep_series=keep_series)


def sweep(
    kinds: Sequence[PolicyKind],
    template: SweepTemplate,
    axis: str,
    values: Sequence[float],
    t_slots: int,
    seeds: Sequence[int],
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
    warmup: int = 0,
    workers: int = 1,
    keep_series: bool = False,
) -> list[SweepCell]:
    """Run the Cartesian product (policy, axis value, seed) and reduce each
    cell to metrics.

    All cell parameter sets are built and validated before the first run.
    Cells are independent; with ``workers > 1`` they execute in a process
    pool, and results are keyed so ordering is deterministic either way.
    """
    if not kinds:
        raise InvalidParameterError("at least one policy kind is required")
    if not values:
        raise InvalidParameterError("at least one axis value is required")
    if not seeds:
        raise InvalidParameterError("at least one seed is required")
    params_by_value = {value: apply_axis(template, axis, value) for value in values}
    cells = [(kind, value, seed)
             for kind in kinds for value in values for seed in seeds]
    tasks = [(kind, params_by_value[value], t_slots, seed, cfg, warmup, keep_series)
             for kind, value, seed in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            metrics = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        metrics = [_run_cell(task) for task in tasks]
    return [SweepCell(kind=kind, axis=axis, value=value, seed=seed,
                      params=params_by_value[value], metrics=m)
            for (kind, value, seed), m in zip(cells, metrics)]

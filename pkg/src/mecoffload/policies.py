"""The four per-slot decision rules behind one uniform interface.

"lodco" delegates to the per-slot optimizer; the three greedy baselines
harvest every arriving joule and spend up to min(battery, e_max) on the
current task with no regard for future slots.  The greedy rules solve the
original problem (no e_min floor on battery output), so only causality and
the e_max discharge cap constrain them.
"""

from __future__ import annotations

import enum
import math

from .model import Decision, InvalidParameterError, Mode, SlotState, SystemParams
from .solver import (
    DEFAULT_ROOT_CONFIG,
    RootFindConfig,
    transmit_delay,
    transmit_power_for_energy,
    decide,
)

__all__ = ["PolicyKind", "policy_decide"]


class PolicyKind(enum.Enum):
    """Available decision rules; values are the serialized names."""

    LODCO = "lodco"
    MOBILE_GD = "mobile-gd"
    SERVER_GD = "server-gd"
    DYNAMIC_GD = "dynamic-gd"


def _greedy_mobile(state: SlotState, params: SystemParams) -> tuple[float, float] | None:
    """Fastest affordable local execution; None when the deadline is unmet.

    Returns (f, delay).
    """
    budget = min(state.b, params.e_max)
    if budget <= 0.0:
        return None
    d = params.derived
    f = min(params.f_max, math.sqrt(budget / d.kw))
    # Keep the rounded energy within the budget (sqrt then square can land
    # one ulp above it).
    while d.kw * f * f > budget:
        f = math.nextafter(f, 0.0)
    if f <= 0.0:
        return None
    delay = d.w / f
    if delay > params.tau_d:
        return None
    return f, delay


def _greedy_server(
    state: SlotState, params: SystemParams, cfg: RootFindConfig,
) -> tuple[float, float] | None:
    """Highest affordable transmit power; None when the deadline is unmet.

    Returns (p, delay).
    """
    budget = min(state.b, params.e_max)
    d = params.derived
    if budget <= 0.0 or d.g1_energy_coeff / state.h >= budget:
        return None  # even p -> 0+ would draw more than the budget
    p_budget = transmit_power_for_energy(state.h, budget, params, cfg, side="low")
    p = min(params.p_max, p_budget)
    delay = transmit_delay(state.h, p, params)
    if delay > params.tau_d:
        return None
    return p, delay


def policy_decide(
    kind: PolicyKind,
    state: SlotState,
    params: SystemParams,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> Decision:
    """Decision of the selected policy for one slot."""
    if kind is PolicyKind.LODCO:
        return decide(state, params, cfg)
    # Greedy rules have no battery set-point: harvest everything, always.
    e = state.e_h
    if state.zeta == 0:
        return Decision(Mode.DROP, 0.0, 0.0, e)
    if kind is PolicyKind.MOBILE_GD:
        local = _greedy_mobile(state, params)
        if local is None:
            return Decision(Mode.DROP, 0.0, 0.0, e)
        return Decision(Mode.MOBILE, local[0], 0.0, e)
    if kind is PolicyKind.SERVER_GD:
        upload = _greedy_server(state, params, cfg)
        if upload is None:
            return Decision(Mode.DROP, 0.0, 0.0, e)
        return Decision(Mode.SERVER, 0.0, upload[0], e)
    if kind is PolicyKind.DYNAMIC_GD:
        local = _greedy_mobile(state, params)
        upload = _greedy_server(state, params, cfg)
        if local is not None and (upload is None or local[1] <= upload[1]):
            # Equal delays go to local execution: no radio energy spent.
            return Decision(Mode.MOBILE, local[0], 0.0, e)
        if upload is not None:
            return Decision(Mode.SERVER, 0.0, upload[0], e)
        return Decision(Mode.DROP, 0.0, 0.0, e)
    raise InvalidParameterError(f"unknown policy kind: {kind!r}")

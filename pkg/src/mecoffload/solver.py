"""Per-slot deterministic optimization: harvest rule, local-execution
frequency, offloading power, and mode selection.

For a slot with a task request, the chosen action minimizes

    J = -b_tilde * energy_drawn + v * delay        (execute)
    J = v * phi                                     (drop)

where ``b_tilde = b - theta`` is the shifted battery level.  The local
subproblem has a closed form; the offloading subproblem reduces to at most
three monotone scalar roots found by bracketed bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .model import (
    LN2,
    Decision,
    InvalidParameterError,
    Mode,
    SlotState,
    SystemParams,
)

__all__ = [
    "ModeEvaluation",
    "RootFindConfig",
    "DEFAULT_ROOT_CONFIG",
    "NoRootError",
    "ConvergenceError",
    "monotone_root",
    "optimal_harvest",
    "solve_mobile",
    "solve_server",
    "server_power_bounds",
    "transmit_energy",
    "transmit_delay",
    "transmit_power_for_energy",
    "xi",
    "decide",
    "decide_detailed",
]

# Two objectives within this relative distance count as tied; ties resolve
# Mobile, then Server, then Drop, for cross-platform determinism.
RELATIVE_TIE = 1e-12


class NoRootError(RuntimeError):
    """Bracket expansion exhausted without enclosing the target."""


class ConvergenceError(RuntimeError):
    """Bisection hit the iteration cap; ``best`` carries the last iterate."""

    def __init__(self, message: str, best: float) -> None:
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class RootFindConfig:
    """Tolerances for the shared bisection engine.

    ``abs_tol`` and ``rel_tol`` act on the unknown (W or Hz), not on the
    residual; ``growth`` is the geometric factor for initial bracketing.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iter: int = 200
    growth: float = 2.0

    def __post_init__(self) -> None:
        if not self.abs_tol > 0.0 or not self.rel_tol > 0.0:
            raise InvalidParameterError("root-finder tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be >= 1")
        if not self.growth > 1.0:
            raise InvalidParameterError("bracket growth factor must exceed 1")


DEFAULT_ROOT_CONFIG = RootFindConfig()


@dataclass(frozen=True)
class ModeEvaluation:
    """Outcome of one single-mode subproblem."""

    feasible: bool
    objective: float  # per-slot J value; +inf when infeasible
    action: float     # frequency (Hz) or power (W); 0 when infeasible
    delay: float      # s
    energy: float     # J


_INFEASIBLE = ModeEvaluation(feasible=False, objective=math.inf,
                             action=0.0, delay=math.inf, energy=0.0)


def monotone_root(
    g: Callable[[float], float],
    target: float,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
    initial: float = 1.0,
    side: str = "mid",
) -> float:
    """Solve g(x) = target for strictly increasing g on (0, inf).

    A bracket [lo, hi] with g(lo) < target <= g(hi) is grown geometrically
    from ``initial`` and then bisected until its width is below
    abs_tol + rel_tol * x.  ``side`` picks which end to return: 'low' keeps
    g(x) < target, 'high' keeps g(x) >= target, 'mid' returns the midpoint.
    Callers use the sided variants to keep rounded constraint values on the
    feasible side.
    """
    if side not in ("low", "high", "mid"):
        raise InvalidParameterError(f"side must be low, high or mid, got {side!r}")
    if not initial > 0.0 or not math.isfinite(initial):
        raise InvalidParameterError(f"initial guess must be finite and positive, got {initial}")
    x = float(initial)
    gx = g(x)
    if gx < target:
        lo, hi = x, x
        for _ in range(cfg.max_iter):
            hi = hi * cfg.growth
            if g(hi) >= target:
                break
            lo = hi
        else:
            raise NoRootError(
                f"g stayed below {target} after {cfg.max_iter} bracket doublings from {initial}")
    else:
        lo, hi = x, x
        for _ in range(cfg.max_iter):
            lo = lo / cfg.growth
            if g(lo) < target:
                break
            hi = lo
        else:
            raise NoRootError(
                f"g stayed at or above {target} after {cfg.max_iter} bracket shrinks from {initial}")
    return _bisect(g, target, lo, hi, cfg, side)


def _bisect(
    g: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    cfg: RootFindConfig,
    side: str,
) -> float:
    # Pre: g(lo) < target <= g(hi), g increasing on [lo, hi].
    for _ in range(cfg.max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= cfg.abs_tol + cfg.rel_tol * mid or not lo < mid < hi:
            break
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError(
            f"bisection did not reach tolerance within {cfg.max_iter} iterations",
            best=0.5 * (lo + hi))
    if side == "low":
        return lo
    if side == "high":
        return hi
    return 0.5 * (lo + hi)


def optimal_harvest(b_tilde: float, e_h: float) -> float:
    """Harvest everything while the battery sits at or below the set-point."""
    if e_h < 0.0:
        raise InvalidParameterError(f"harvestable energy must be >= 0, got {e_h}")
    return e_h if b_tilde <= 0.0 else 0.0


def solve_mobile(b_tilde: float, params: SystemParams) -> ModeEvaluation:
    """Optimal CPU-cycle frequency for local execution.

    Feasible iff f_l <= f_u with f_l = max(sqrt(e_min/(kappa*w)), w/tau_d)
    and f_u = min(sqrt(e_max/(kappa*w)), f_max).  The unconstrained optimum
    for b_tilde < 0 is f0 = (v / (-2 b_tilde kappa))^(1/3); the solution is
    f0 clamped to [f_l, f_u], or f_u outright when b_tilde >= 0 (energy is a
    credit there, so run as fast as allowed).
    """
    d = params.derived
    if not d.mobile_feasible:
        return _INFEASIBLE
    if b_tilde >= 0.0:
        f = d.f_u
    else:
        denom = -2.0 * b_tilde * params.kappa
        if denom == 0.0:  # underflow for denormal b_tilde; f0 -> inf
            f = d.f_u
        else:
            f0 = (params.v / denom) ** (1.0 / 3.0)
            f = min(max(f0, d.f_l), d.f_u)
    delay = d.w / f
    energy = d.kw * f * f
    objective = -b_tilde * energy + params.v * delay
    return ModeEvaluation(True, objective, f, delay, energy)


def transmit_delay(h: float, p: float, params: SystemParams) -> float:
    return params.l_bits / (params.omega * math.log1p(h * p / params.sigma) / LN2)


def transmit_energy(h: float, p: float, params: SystemParams) -> float:
    """Battery energy p * (L / rate(h, p)) drawn by an upload at power p.

    Evaluated in exactly the rounding order used for slot outcomes, so
    bisection targets and the engine's constraint checks agree bit for bit.
    """
    r = params.omega * math.log1p(h * p / params.sigma) / LN2
    return p * (params.l_bits / r)


def transmit_power_for_energy(
    h: float, energy: float, params: SystemParams, cfg: RootFindConfig, side: str,
) -> float:
    """Unique p with transmit_energy(h, p) = energy.

    Exists iff sigma*L*ln2/(omega*h) < energy (the energy map's infimum);
    callers gate on that.
    """
    l_bits = params.l_bits
    omega = params.omega
    sigma = params.sigma

    def g(p: float) -> float:
        r = omega * math.log1p(h * p / sigma) / LN2
        return p * (l_bits / r)

    initial = energy * params.omega * h / (params.sigma * l_bits * LN2)
    # Debug guard for the monotonicity the bisection relies on.
    assert g(initial) < g(initial * 2.0), "transmit-energy map is not increasing"
    return monotone_root(g, energy, cfg, initial=initial, side=side)


def xi(h: float, p: float, b_tilde: float, params: SystemParams) -> float:
    """Stationarity function of the offloading objective.

    Strictly increasing in p for b_tilde < 0, negative at p -> 0+; its root
    p0 is the unconstrained optimal transmit power.
    """
    snr = h * p / params.sigma
    return (-b_tilde * math.log1p(snr) / LN2
            - h * (params.v - b_tilde * p) / ((params.sigma + h * p) * LN2))


def server_power_bounds(
    h: float,
    params: SystemParams,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> Optional[tuple[float, float]]:
    """Feasible transmit-power window [p_l, p_u], or None when offloading is
    impossible this slot.

    p_u caps energy at e_max and power at p_max; p_l enforces the deadline
    and the e_min energy floor.  Energy roots are only solved for when the
    cheap endpoint checks show they actually bind.
    """
    d = params.derived
    energy_floor = d.g1_energy_coeff / h  # infimum of p -> transmit energy
    if energy_floor >= params.e_max:
        return None  # deep fade: even p -> 0+ would exceed the discharge cap
    if transmit_energy(h, params.p_max, params) <= params.e_max:
        p_u = params.p_max
    else:
        p_u = transmit_power_for_energy(h, params.e_max, params, cfg, side="low")
    # Smallest power that moves l_bits within the deadline; nudged so the
    # rounded delay stays at or below tau_d.
    p_deadline = d.snr_gap * params.sigma / h
    for _ in range(64):
        if transmit_delay(h, p_deadline, params) <= params.tau_d:
            break
        p_deadline = math.nextafter(p_deadline, math.inf)
    else:
        raise ArithmeticError("could not place the deadline power on the feasible side")
    if energy_floor >= params.e_min or transmit_energy(h, p_deadline, params) >= params.e_min:
        p_l = p_deadline
    else:
        p_l = max(p_deadline, transmit_power_for_energy(h, params.e_min, params, cfg, side="high"))
    if p_l > p_u:
        return None
    return p_l, p_u


def solve_server(
    b_tilde: float,
    h: float,
    params: SystemParams,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> ModeEvaluation:
    """Optimal transmit power for offloading the task to the edge server.

    Within the feasible window the optimum is p_u for b_tilde >= 0, else the
    root p0 of xi clamped to [p_l, p_u].
    """
    if not h > 0.0:
        raise InvalidParameterError(f"channel gain must be positive, got {h}")
    bounds = server_power_bounds(h, params, cfg)
    if bounds is None:
        return _INFEASIBLE
    p_l, p_u = bounds
    if b_tilde >= 0.0:
        p = p_u
    else:
        sigma, v = params.sigma, params.v
        scaled_b = -b_tilde

        def g(p: float) -> float:
            snr = h * p / sigma
            return scaled_b * math.log1p(snr) / LN2 - h * (v + scaled_b * p) / ((sigma + h * p) * LN2)

        # The stationarity root only matters inside [p_l, p_u]; checking the
        # endpoints first settles the clamped cases without any search.
        if g(p_l) >= 0.0:
            p = p_l
        elif g(p_u) < 0.0:
            p = p_u
        else:
            p = _bisect(g, 0.0, p_l, p_u, cfg, side="mid")
    r = params.omega * math.log1p(h * p / params.sigma) / LN2
    delay = params.l_bits / r
    energy = p * delay
    objective = -b_tilde * energy + params.v * delay
    return ModeEvaluation(True, objective, p, delay, energy)


def _strictly_better(a: float, b: float) -> bool:
    # a beats b by more than the tie tolerance.
    return a < b - RELATIVE_TIE * max(abs(a), abs(b))


def decide_detailed(
    state: SlotState,
    params: SystemParams,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> tuple[Decision, float]:
    """Optimal decision for one slot plus its per-slot objective value."""
    b_tilde = state.b - params.theta
    e = optimal_harvest(b_tilde, state.e_h)
    if state.zeta == 0:
        # No request: dropping is the only feasible point and costs nothing.
        return Decision(Mode.DROP, 0.0, 0.0, e), 0.0
    mobile = solve_mobile(b_tilde, params)
    server = solve_server(b_tilde, h=state.h, params=params, cfg=cfg)
    # Candidates in preference order; a later one must be strictly better
    # than the incumbent to win, so ties resolve Mobile, Server, Drop.
    candidates: list[tuple[Mode, float, float, float]] = []
    if mobile.feasible:
        candidates.append((Mode.MOBILE, mobile.objective, mobile.action, 0.0))
    if server.feasible:
        candidates.append((Mode.SERVER, server.objective, 0.0, server.action))
    candidates.append((Mode.DROP, params.derived.j_drop, 0.0, 0.0))
    best = candidates[0]
    for cand in candidates[1:]:
        if _strictly_better(cand[1], best[1]):
            best = cand
    mode, objective, f, p = best
    return Decision(mode, f, p, e), objective


def decide(
    state: SlotState,
    params: SystemParams,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> Decision:
    """Optimal decision for one slot (harvest, mode, frequency or power)."""
    return decide_detailed(state, params, cfg)[0]

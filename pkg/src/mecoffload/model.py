"""Domain types, deterministic physics/cost formulas, and bound calculators.

Everything downstream (solver, policies, engine, oracle, cli) consumes this
module.  All quantities are SI doubles: seconds, joules, watts, hertz, bits.
Types are immutable value objects and safe to share across workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

LN2 = math.log(2.0)

__all__ = [
    "LN2",
    "Mode",
    "SystemParams",
    "SlotState",
    "Decision",
    "SlotOutcome",
    "BoundConstants",
    "InvalidParameterError",
    "InvalidChannelError",
    "InfeasibleDelayError",
    "derive_workload",
    "rate",
    "mobile_delay_energy",
    "server_delay_energy",
    "slot_cost",
    "e_tilde_max",
    "theta_min",
    "bound_constants",
]


class InvalidParameterError(ValueError):
    """A physical parameter is outside its valid range."""


class InvalidChannelError(InvalidParameterError):
    """Channel power gain must be strictly positive."""


class InfeasibleDelayError(ArithmeticError):
    """Transmission rate is zero, so the transfer can never complete.

    Raised instead of returning an infinite delay; callers treat it as an
    explicit infeasibility marker rather than a sentinel float.
    """


class Mode(enum.Enum):
    """What happens to the task requested in a slot."""

    MOBILE = "mobile"
    SERVER = "server"
    DROP = "drop"


def derive_workload(l_bits: float, x_cycles: float) -> float:
    """CPU cycles needed for one task of ``l_bits`` input bits.

    ``x_cycles`` is the workload coefficient in cycles per *byte*, so the
    total is ceil(l_bits / 8) * x_cycles.
    """
    if l_bits <= 0:
        raise InvalidParameterError(f"l_bits must be positive, got {l_bits}")
    if x_cycles <= 0:
        raise InvalidParameterError(f"x_cycles must be positive, got {x_cycles}")
    return float(math.ceil(l_bits / 8.0) * x_cycles)


def _nudge(x: float, toward: float, ok) -> float:
    # Walk x by ulps until ok(x); used to keep rounded boundary values on the
    # feasible side of their constraint.  Never needs more than a few steps.
    for _ in range(64):
        if ok(x):
            return x
        x = math.nextafter(x, toward)
    raise ArithmeticError("could not place boundary on the feasible side")


class _Derived:
    """Constants precomputed once per parameter set for the per-slot solvers."""

    __slots__ = (
        "w",
        "kw",
        "j_drop",
        "f_l",
        "f_u",
        "mobile_feasible",
        "snr_gap",
        "g1_energy_coeff",
        "b_cap",
    )

    def __init__(self, p: "SystemParams") -> None:
        self.w = p.w_cycles
        self.kw = p.kappa * self.w
        self.j_drop = p.v * p.phi
        # Feasible CPU-frequency window: energy window [e_min, e_max] plus the
        # deadline floor w/tau_d and the hardware ceiling f_max.  Boundary
        # values are nudged so that the *rounded* energy/delay stay inside
        # their constraints (the engine asserts those with zero tolerance).
        kw = self.kw
        f_energy_lo = _nudge(math.sqrt(p.e_min / kw), math.inf, lambda f: kw * f * f >= p.e_min)
        f_deadline = _nudge(self.w / p.tau_d, math.inf, lambda f: self.w / f <= p.tau_d)
        f_energy_hi = _nudge(math.sqrt(p.e_max / kw), 0.0, lambda f: kw * f * f <= p.e_max)
        self.f_l = max(f_energy_lo, f_deadline)
        self.f_u = min(f_energy_hi, p.f_max)
        self.mobile_feasible = self.f_l <= self.f_u
        # 2**(L / (omega * tau_d)) - 1: SNR needed to move L bits in tau_d.
        self.snr_gap = 2.0 ** (p.l_bits / (p.omega * p.tau_d)) - 1.0
        # sigma * L * ln2 / omega: divide by h to get the infimum of the
        # transmit-energy map p -> p * L / rate(h, p) as p -> 0+.
        self.g1_energy_coeff = p.sigma * p.l_bits * LN2 / p.omega
        self.b_cap = p.theta + p.eh_max


@dataclass(frozen=True)
class SystemParams:
    """All physical and control constants of the system.

    Shared read-only by any number of concurrent runs.  ``theta`` must
    satisfy the perturbation lower bound (see :func:`theta_min`); pass the
    value returned by :func:`theta_min` unless deliberately over-provisioning.
    """

    rho: float        # task arrival probability per slot
    l_bits: float     # task input size (bits)
    x_cycles: float   # workload coefficient (CPU cycles per byte)
    tau: float        # slot length (s)
    tau_d: float      # execution deadline (s)
    phi: float        # task-drop penalty weight (s)
    kappa: float      # effective switched capacitance (J*s^2/cycle^3)
    f_max: float      # maximum CPU-cycle frequency (Hz)
    p_max: float      # maximum transmit power (W)
    omega: float      # bandwidth (Hz)
    sigma: float      # receiver noise power (W)
    h_mean: float     # mean channel power gain (dimensionless)
    eh_max: float     # maximum harvestable energy per slot (J)
    e_min: float      # battery output lower bound (J)
    e_max: float      # battery output upper bound (J)
    v: float          # cost weight in the per-slot objective (J^2/s)
    theta: float      # battery set-point / perturbation (J)

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParameterError(f"rho must be in [0, 1], got {self.rho}")
        for name in ("l_bits", "x_cycles", "tau", "tau_d", "phi", "kappa",
                     "f_max", "p_max", "omega", "sigma", "h_mean", "eh_max"):
            value = getattr(self, name)
            if not value > 0.0 or not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite and positive, got {value}")
        if self.tau_d > self.tau:
            raise InvalidParameterError(
                f"deadline tau_d={self.tau_d} exceeds the slot length tau={self.tau}")
        if self.tau_d > self.phi:
            raise InvalidParameterError(
                f"drop penalty phi={self.phi} must be at least the deadline tau_d={self.tau_d}")
        if not 0.0 < self.e_min <= self.e_max:
            raise InvalidParameterError(
                f"need 0 < e_min <= e_max, got e_min={self.e_min}, e_max={self.e_max}")
        if not self.v > 0.0 or not math.isfinite(self.v):
            raise InvalidParameterError(f"v must be finite and positive, got {self.v}")
        if self.theta < theta_min(self):
            raise InvalidParameterError(
                f"theta={self.theta} is below the lower bound {theta_min(self)}; "
                "the battery set-point would not guarantee causal operation")

    @cached_property
    def w_cycles(self) -> float:
        """Total CPU cycles per task."""
        return derive_workload(self.l_bits, self.x_cycles)

    @cached_property
    def derived(self) -> _Derived:
        return _Derived(self)


@dataclass(frozen=True)
class SlotState:
    """Causal side information available at the start of slot ``t``."""

    t: int       # slot index
    zeta: int    # 1 if a task was requested this slot
    h: float     # channel power gain
    e_h: float   # harvestable energy this slot (J)
    b: float     # battery level at the slot start (J)

    def __post_init__(self) -> None:
        if self.t < 0:
            raise InvalidParameterError(f"slot index must be >= 0, got {self.t}")
        if self.zeta not in (0, 1):
            raise InvalidParameterError(f"zeta must be 0 or 1, got {self.zeta}")
        if not self.h > 0.0:
            raise InvalidChannelError(f"channel gain must be positive, got {self.h}")
        if self.e_h < 0.0:
            raise InvalidParameterError(f"harvestable energy must be >= 0, got {self.e_h}")
        if self.b < 0.0:
            raise InvalidParameterError(f"battery level must be >= 0, got {self.b}")


@dataclass(frozen=True)
class Decision:
    """One slot's action: mode, CPU frequency, transmit power, harvested energy.

    ``f`` is nonzero only in MOBILE mode, ``p`` only in SERVER mode.
    """

    mode: Mode
    f: float  # CPU-cycle frequency (Hz)
    p: float  # transmit power (W)
    e: float  # harvested energy (J)

    def __post_init__(self) -> None:
        if self.mode is not Mode.MOBILE and self.f != 0.0:
            raise InvalidParameterError(f"f must be 0 unless mode is mobile, got {self.f}")
        if self.mode is not Mode.SERVER and self.p != 0.0:
            raise InvalidParameterError(f"p must be 0 unless mode is server, got {self.p}")
        if self.mode is Mode.MOBILE and not self.f > 0.0:
            raise InvalidParameterError(f"mobile execution needs f > 0, got {self.f}")
        if self.mode is Mode.SERVER and not self.p > 0.0:
            raise InvalidParameterError(f"offloading needs p > 0, got {self.p}")
        if self.e < 0.0:
            raise InvalidParameterError(f"harvested energy must be >= 0, got {self.e}")


@dataclass(frozen=True)
class SlotOutcome:
    """Realized consequences of one slot's decision."""

    cost: float              # execution cost (s)
    delay: float             # completion time (s); 0 if dropped or no task
    energy_used: float       # battery output (J)
    energy_harvested: float  # battery input (J)
    b_next: float            # battery level at the next slot start (J)


def rate(h: float, p: float, params: SystemParams) -> float:
    """Achievable uplink rate omega * log2(1 + h*p/sigma) in bits/s."""
    if not h > 0.0:
        raise InvalidChannelError(f"channel gain must be positive, got {h}")
    if p < 0.0:
        raise InvalidParameterError(f"transmit power must be >= 0, got {p}")
    if p == 0.0:
        return 0.0
    # log1p keeps full precision for h*p << sigma.
    return params.omega * math.log1p(h * p / params.sigma) / LN2


def mobile_delay_energy(f: float, params: SystemParams) -> tuple[float, float]:
    """Delay w/f and DVFS energy kappa*w*f^2 of local execution at frequency f."""
    if not f > 0.0:
        raise InvalidParameterError(f"CPU frequency must be positive, got {f}")
    w = params.w_cycles
    return w / f, params.kappa * w * f * f


def server_delay_energy(h: float, p: float, params: SystemParams) -> tuple[float, float]:
    """Transmission delay L/rate and radio energy p*delay of offloading."""
    r = rate(h, p, params)
    if r == 0.0:
        raise InfeasibleDelayError(
            f"rate is zero at h={h}, p={p}: transfer cannot complete")
    delay = params.l_bits / r
    return delay, p * delay


def slot_cost(state: SlotState, decision: Decision, params: SystemParams) -> float:
    """Execution cost of a slot: delay if executed, phi if dropped, 0 if idle."""
    if state.zeta == 0:
        return 0.0
    if decision.mode is Mode.DROP:
        return params.phi
    if decision.mode is Mode.MOBILE:
        return mobile_delay_energy(decision.f, params)[0]
    return server_delay_energy(state.h, decision.p, params)[0]


def e_tilde_max(params: SystemParams) -> float:
    """Largest battery output any feasible single-slot action can draw.

    min(max(kappa*w*f_max^2, p_max*tau), e_max).
    """
    full_speed = params.kappa * params.w_cycles * params.f_max * params.f_max
    return min(max(full_speed, params.p_max * params.tau), params.e_max)


def theta_min(params: SystemParams) -> float:
    """Smallest admissible battery set-point: e_tilde_max + v*phi/e_min.

    Any theta at or above this value makes dropping strictly preferable
    whenever the battery cannot cover the largest possible draw, which is
    what keeps the algorithm causal.
    """
    return e_tilde_max(params) + params.v * params.phi / params.e_min


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the analytical performance guarantee."""

    c: float    # drift bound constant (J^2)
    nu: float   # cost of the e_min tightening (s)
    gap: float  # nu + c/v: worst-case distance from the offline optimum (s)


def bound_constants(params: SystemParams) -> BoundConstants:
    """Compute the analytical constants (c, nu, nu + c/v).

    The channel gain is taken exponential with mean ``h_mean`` (its CDF is
    needed for nu).  nu quantifies how much the e_min lower bound on battery
    output can cost; it vanishes as e_min -> 0.
    """
    etil = e_tilde_max(params)
    c = (params.eh_max * params.eh_max + etil * etil) / 2.0
    w = params.w_cycles
    # Gain below which a deadline-meeting upload needs more than e_min.
    eta = ((2.0 ** (params.l_bits / (params.tau_d * params.omega)) - 1.0)
           * params.sigma * params.tau_d / params.e_min)
    tail = math.exp(-eta / params.h_mean)  # 1 - F_H(eta)
    nu = params.phi * tail
    e_min_deadline = params.kappa * w ** 3 / (params.tau_d * params.tau_d)
    if params.e_min >= e_min_deadline:
        # Local execution spending exactly e_min meets the deadline; its
        # delay is sqrt(kappa * w^3 / e_min).
        nu += params.phi - math.sqrt(params.kappa) * w ** 1.5 / math.sqrt(params.e_min)
    nu *= params.rho
    return BoundConstants(c=c, nu=nu, gap=nu + c / params.v)

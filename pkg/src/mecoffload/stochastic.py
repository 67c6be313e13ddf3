"""Seeded, reproducible generators for the three exogenous processes.

Task arrivals are Bernoulli(rho), channel gains exponential with mean
``h_mean``, harvestable energy uniform on [0, eh_max]; all i.i.d. across
slots.  Each process draws from its own PCG64 stream derived from
(seed, stream id), so sequences are bit-reproducible across platforms and
runs, and perturbing one stream never shifts the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InvalidParameterError, SystemParams

__all__ = [
    "TASK_STREAM",
    "CHANNEL_STREAM",
    "ENERGY_STREAM",
    "BATTERY_STREAM",
    "RandomSource",
    "ProcessConfig",
    "SlotSampler",
    "sample_slot",
    "sample_trace",
]

# Fixed stream ids; engine and oracle rely on this layout.
TASK_STREAM = 0
CHANNEL_STREAM = 1
ENERGY_STREAM = 2
BATTERY_STREAM = 3  # used only by the certification state sampler

# Floor applied to the inverse-CDF channel gain: keeps it strictly positive
# (a deep fade, not an invalid state) even on the measure-zero draw u == 0.
_MIN_GAIN = 5e-324


class RandomSource:
    """One reproducible uniform stream, fully determined by (seed, stream_id)."""

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int) -> None:
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self) -> float:
        """Next uniform draw in [0, 1)."""
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` uniform draws; consumes the stream exactly like ``n``
        scalar calls."""
        return self._gen.random(n)


@dataclass(frozen=True)
class ProcessConfig:
    """Distribution parameters of the three exogenous processes."""

    rho: float     # Bernoulli task-arrival probability
    h_mean: float  # mean of the exponential channel gain
    eh_max: float  # upper bound of the uniform energy arrivals (J)

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParameterError(f"rho must be in [0, 1], got {self.rho}")
        if not self.h_mean > 0.0:
            raise InvalidParameterError(f"h_mean must be positive, got {self.h_mean}")
        if self.eh_max < 0.0:
            raise InvalidParameterError(f"eh_max must be >= 0, got {self.eh_max}")

    @classmethod
    def from_params(cls, params: SystemParams) -> "ProcessConfig":
        return cls(rho=params.rho, h_mean=params.h_mean, eh_max=params.eh_max)


class SlotSampler:
    """The three per-process streams of one simulation run."""

    __slots__ = ("seed", "task", "channel", "energy")

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self.task = RandomSource(seed, TASK_STREAM)
        self.channel = RandomSource(seed, CHANNEL_STREAM)
        self.energy = RandomSource(seed, ENERGY_STREAM)


def _exponential_icdf(mean: float, u: float) -> float:
    # Inverse CDF of Exp(mean) at u in [0, 1); log1p keeps precision for
    # small u and the max() guards the u == 0 draw.  numpy's log1p, not
    # math's: the two can differ by an ulp and the scalar path must agree
    # bit-for-bit with the vectorized one.
    return max(float(-mean * np.log1p(-u)), _MIN_GAIN)


def sample_slot(rng: SlotSampler, cfg: ProcessConfig) -> tuple[int, float, float]:
    """Draw one slot's (zeta, h, e_h), one value from each stream."""
    zeta = 1 if rng.task.uniform() < cfg.rho else 0
    h = _exponential_icdf(cfg.h_mean, rng.channel.uniform())
    e_h = cfg.eh_max * rng.energy.uniform()
    return zeta, h, e_h


def sample_trace(seed: int, cfg: ProcessConfig, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``n`` slots at once; element-wise identical to ``n`` calls of
    :func:`sample_slot` with a fresh sampler."""
    if n < 0:
        raise InvalidParameterError(f"n must be >= 0, got {n}")
    rng = SlotSampler(seed)
    zeta = (rng.task.uniforms(n) < cfg.rho).astype(np.int8)
    h = np.maximum(-cfg.h_mean * np.log1p(-rng.channel.uniforms(n)), _MIN_GAIN)
    e_h = cfg.eh_max * rng.energy.uniforms(n)
    return zeta, h, e_h

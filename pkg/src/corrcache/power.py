"""Minimum-power superposition coding on a degraded Gaussian broadcast channel.

Per-level powers are derived bottom-up (strongest user first) so that each
user's rate constraint is tight given the power spent on stronger users.
All power arithmetic is double precision; comparisons use TOLERANCE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .model import ChannelConfig

TOLERANCE = 1e-9


def gaussian_capacity(snr: float) -> float:
    """C(x) = 0.5 * log2(1 + x), bits per real channel use."""
    return 0.5 * math.log2(1.0 + snr)


@dataclass(frozen=True)
class PowerResult:
    """Per-level transmit powers (weakest user's layer first)."""

    per_level: tuple[float, ...]

    @property
    def total(self) -> float:
        return math.fsum(self.per_level)


def min_superposition_power(
    rates: Sequence[float], channel: ChannelConfig
) -> PowerResult:
    """Tight per-level powers delivering the given per-user rates.

    ``rates[k-1]`` is the message rate for user k (users ordered
    weakest-first, matching the channel).  Level k's power makes user k's
    decoding constraint an equality given the power of levels k+1..K.
    """
    rho = [float(r) for r in rates]
    if len(rho) != channel.n_users:
        raise ValueError(
            f"got {len(rho)} rates for {channel.n_users} users"
        )
    if any(r < 0 for r in rho):
        raise ValueError("rates must be non-negative")
    levels = [0.0] * len(rho)
    tail = 0.0  # power of all stronger users' levels
    for k in reversed(range(len(rho))):
        gain = channel.gains_sq[k]
        levels[k] = (2.0 ** (2.0 * rho[k]) - 1.0) * (1.0 / gain + tail)
        tail += levels[k]
    return PowerResult(tuple(levels))


def rate_feasible(
    rates: Sequence[float],
    per_level_power: Sequence[float],
    channel: ChannelConfig,
    slack: float = TOLERANCE,
) -> bool:
    """Whether the given per-level powers support the per-user rates."""
    rho = [float(r) for r in rates]
    powers = [float(p) for p in per_level_power]
    if len(rho) != channel.n_users or len(powers) != channel.n_users:
        raise ValueError("rates/powers must match the number of users")
    tail = 0.0
    for k in reversed(range(len(rho))):
        gain = channel.gains_sq[k]
        snr = gain * powers[k] / (1.0 + gain * tail)
        if rho[k] > gaussian_capacity(snr) + slack:
            return False
        tail += powers[k]
    return True

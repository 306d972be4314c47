"""Building-level reward: weighted energy consumption plus comfort complaints.

The reward is shared by all agents.  It is the negative weighted sum of the
building's hourly energy consumption (optionally flattened above a clip
level, so that single consumption spikes cannot drown out the comfort term)
and the per-zone complaint magnitudes of the simulated occupants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class RewardConfig:
    """Weights and flattening parameters of the shared reward.

    lambda_e scales energy (per kWh), lambda_m scales complaints (per K).
    The comfort/energy ratio lambda_m / lambda_e is the main tuning knob;
    useful values lie roughly in [7.5, 30].
    """

    lambda_e: float = 0.004
    lambda_m: float = 0.12
    clip_level: float = 150.0
    flatten_enabled: bool = True

    def __post_init__(self) -> None:
        if self.lambda_e <= 0 or self.lambda_m <= 0:
            raise ValueError("reward weights must be positive")
        if self.clip_level <= 0:
            raise ValueError("clip_level must be positive")

    @property
    def ratio(self) -> float:
        """Comfort-to-energy weight ratio."""
        return self.lambda_m / self.lambda_e


def temp_deviation(zone_temp: float, comfort_temp: Optional[float]) -> float:
    """Absolute gap between zone temperature and the occupants' mean wish.

    Returns 0 for an unoccupied zone (no comfort temperature on record).
    """
    if comfort_temp is None:
        return 0.0
    return abs(zone_temp - comfort_temp)


def complaint_magnitude(deviation: float) -> float:
    """Complaint magnitude for one zone: 0 inside the +/-1 K band.

    Outside the band the occupants complain with the full deviation, not
    just the excess over the band, so the value jumps from 0 to >1 at the
    band edge.
    """
    if deviation < 0:
        raise ValueError("deviation must be non-negative")
    if deviation <= 1.0:
        return 0.0
    return deviation


def flatten_energy(e_all: float, config: RewardConfig) -> float:
    """Compress energy readings above the clip level to 10% slope.

    Identity below the clip level and whenever flattening is disabled.
    """
    if e_all < 0:
        raise ValueError("energy must be non-negative")
    if not config.flatten_enabled or e_all <= config.clip_level:
        return e_all
    return (e_all - config.clip_level) * 0.1 + config.clip_level


def compute_reward(e_all: float, complaints: Sequence[float], config: RewardConfig) -> float:
    """Shared reward: -(lambda_e * flattened energy + lambda_m * sum of complaints).

    Always <= 0.  ``complaints`` carries one magnitude per zone for the
    elapsed timestep.
    """
    if any(c < 0 for c in complaints):
        raise ValueError("complaint magnitudes must be non-negative")
    return -(config.lambda_e * flatten_energy(e_all, config) + config.lambda_m * sum(complaints))

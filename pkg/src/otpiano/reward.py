"""Per-step reward terms and their weighted aggregate.

The proximity term turns the solved finger-moving distance into a shaped
reward that saturates at 1 once fingertips are within a press threshold.
Press and sustain terms reuse a Gaussian tolerance curve; collision is a
binary bonus and energy a penalty.  All shaping terms live in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .midi import DimensionMismatchError


class InvalidParamsError(ValueError):
    """Shaping parameters outside their valid ranges."""


def tolerance(x: float, bounds=(0.0, 0.0), margin: float = 0.1, value_at_margin: float = 0.1) -> float:
    """Gaussian tolerance curve: 1 inside ``bounds``, decaying outside.

    At distance ``margin`` from the bounds interval the value is exactly
    ``value_at_margin``; beyond that it keeps falling as a Gaussian, so the
    result is always in (0, 1].
    """
    lo, hi = bounds
    if lo > hi:
        raise InvalidParamsError(f"bounds {bounds} must satisfy lo <= hi")
    if margin <= 0.0:
        raise InvalidParamsError("margin must be > 0")
    if not 0.0 < value_at_margin < 1.0:
        raise InvalidParamsError("value_at_margin must lie in (0, 1)")
    if lo <= x <= hi:
        return 1.0
    distance = (lo - x) if x < lo else (x - hi)
    scaled = distance / margin
    # exp(-0.5 (scaled*w)^2) with w fixed by the value at scaled == 1
    return math.exp(math.log(value_at_margin) * scaled * scaled)


def _default_scale() -> float:
    # makes the proximity falloff match a Gaussian tolerance with
    # margin 0.1 m and value 0.1 at the margin
    return math.log(0.1) / 0.1**2


@dataclass(frozen=True)
class RewardParams:
    """Coefficients and shaping parameters for all reward terms."""

    threshold: float = 0.01  # meters; proximity saturates below this
    scale: float = _default_scale()  # exponential falloff, < 0
    alpha_collision: float = 0.5
    alpha_energy: float = 5e-3
    tolerance_bounds: tuple = (0.0, 0.05)
    tolerance_margin: float = 0.5
    value_at_margin: float = 0.1

    def __post_init__(self) -> None:
        if self.threshold <= 0.0:
            raise InvalidParamsError("threshold must be > 0")
        if self.scale >= 0.0:
            raise InvalidParamsError("scale must be < 0")
        if self.tolerance_margin <= 0.0:
            raise InvalidParamsError("tolerance_margin must be > 0")
        if not 0.0 < self.value_at_margin < 1.0:
            raise InvalidParamsError("value_at_margin must lie in (0, 1)")

    def shaping(self, x: float) -> float:
        """The configured tolerance curve."""
        return tolerance(x, self.tolerance_bounds, self.tolerance_margin, self.value_at_margin)

    @classmethod
    def from_mapping(cls, values: dict) -> "RewardParams":
        known = {
            "threshold",
            "scale",
            "alpha_collision",
            "alpha_energy",
            "tolerance_bounds",
            "tolerance_margin",
            "value_at_margin",
        }
        unknown = set(values) - known
        if unknown:
            raise InvalidParamsError(f"unknown reward keys: {sorted(unknown)}")
        kwargs = dict(values)
        if "tolerance_bounds" in kwargs:
            kwargs["tolerance_bounds"] = tuple(float(x) for x in kwargs["tolerance_bounds"])
        return cls(**kwargs)

    def snapshot(self) -> dict:
        return {
            "reward.threshold": self.threshold,
            "reward.scale": self.scale,
            "reward.alpha_collision": self.alpha_collision,
            "reward.alpha_energy": self.alpha_energy,
            "reward.tolerance_bounds": self.tolerance_bounds,
            "reward.tolerance_margin": self.tolerance_margin,
            "reward.value_at_margin": self.value_at_margin,
        }


DEFAULT_PARAMS = RewardParams()


def ot_reward(distance: float, params: RewardParams = DEFAULT_PARAMS) -> float:
    """Proximity reward from the solved total moving distance.

    1.0 below the press threshold, then exp(scale * (d - threshold)^2):
    continuous at the threshold and strictly decreasing beyond it.
    """
    if distance < 0.0:
        raise ValueError("distance must be >= 0")
    if distance < params.threshold:
        return 1.0
    excess = distance - params.threshold
    return math.exp(params.scale * excess * excess)


def press_reward(key_state, active_keys, false_press: bool, params: RewardParams = DEFAULT_PARAMS) -> float:
    """Half for sinking the active keys, half for touching nothing else.

    The depth term averages the shaping of |depth - 1| over active keys
    (vacuously 1 with no active keys); the second term zeroes out when any
    inactive key is pressed.
    """
    active = sorted(active_keys)
    if active:
        depth_term = sum(params.shaping(abs(key_state.depths[k] - 1.0)) for k in active) / len(active)
    else:
        depth_term = 1.0
    return 0.5 * depth_term + 0.5 * (0.0 if false_press else 1.0)


def sustain_reward(s: float, s_target: float, params: RewardParams = DEFAULT_PARAMS) -> float:
    """Shaped closeness of the sustain state to its target."""
    if not 0.0 <= s <= 1.0 or not 0.0 <= s_target <= 1.0:
        raise ValueError("sustain values must lie in [0, 1]")
    return params.shaping(abs(s - s_target))


def collision_reward(collided: bool) -> float:
    """1 when the forearms stayed clear, 0 on collision."""
    return 0.0 if collided else 1.0


def energy_cost(torques, velocities) -> float:
    """Sum of |torque| * |velocity| over joints."""
    tau = np.asarray(torques, dtype=np.float64)
    vel = np.asarray(velocities, dtype=np.float64)
    if tau.shape != vel.shape or tau.ndim != 1:
        raise DimensionMismatchError(f"torques {tau.shape} and velocities {vel.shape} must be equal-length vectors")
    return float(np.abs(tau) @ np.abs(vel))


@dataclass(frozen=True)
class RewardBreakdown:
    """All reward components plus their weighted total."""

    ot: float
    press: float
    sustain: float
    collision: float
    energy: float
    total: float

    def as_row(self) -> tuple:
        return (self.ot, self.press, self.sustain, self.collision, self.energy, self.total)


CSV_COLUMNS = ("step", "ot", "press", "sustain", "collision", "energy", "total")


def total_reward(
    ot: float,
    press: float,
    sustain: float,
    collision: float,
    energy: float,
    params: RewardParams = DEFAULT_PARAMS,
) -> RewardBreakdown:
    """Weighted aggregate of the five components.

    Energy enters as a penalty (subtracted with weight alpha_energy); the
    collision bonus is weighted by alpha_collision.
    """
    for name, value in (("ot", ot), ("press", press), ("sustain", sustain), ("collision", collision), ("energy", energy)):
        if not math.isfinite(value):
            raise ValueError(f"{name} component must be finite")
    total = ot + press + sustain + params.alpha_collision * collision - params.alpha_energy * energy
    return RewardBreakdown(ot=ot, press=press, sustain=sustain, collision=collision, energy=energy, total=total)

"""Bimanual point-fingertip surrogate with speed and span limits.

Fingertips are free 3D points that chase assigned key targets under a
per-step speed cap; each hand has a scalar base position that follows the
lateral center of its targets, and a span limit that keeps fingertips of
one hand inside a reach ball (a hand cannot press keys too far apart).
This replaces joint-level simulation for annotation purposes: assignment
costs only need fingertip positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError
from .keyboard import KeyboardGeometry

LEFT = "left"
RIGHT = "right"
DIGIT_NAMES = ("thumb", "index", "middle", "ring", "little")

DEFAULT_SPAN_MAX = 0.20
DEFAULT_V_MAX = 2.0
DEFAULT_BASE_V_MAX = 1.0
DEFAULT_MIN_BASE_GAP = 0.10
_REST_SPACING = 0.0225  # rest-pose fingertip spacing, one white key


class InvalidConfigError(ConfigError):
    """Hand configuration violates its invariants."""


@dataclass(frozen=True, order=True)
class FingerId:
    """One digit of one hand; digit 1 = thumb .. 5 = little."""

    hand: str
    digit: int

    def __post_init__(self) -> None:
        if self.hand not in (LEFT, RIGHT):
            raise InvalidConfigError(f"hand must be {LEFT!r} or {RIGHT!r}")
        if not 1 <= self.digit <= 5:
            raise InvalidConfigError("digit must be 1..5")

    def label(self) -> str:
        return f"{'L' if self.hand == LEFT else 'R'}{self.digit}"

    @classmethod
    def from_label(cls, label: str) -> "FingerId":
        if len(label) != 2 or label[0] not in "LR":
            raise InvalidConfigError(f"bad finger label {label!r}")
        return cls(LEFT if label[0] == "L" else RIGHT, int(label[1]))


ALL_FINGERS = tuple(FingerId(hand, digit) for hand in (LEFT, RIGHT) for digit in range(1, 6))


def _default_rest_offsets() -> dict:
    """Rest pose: digits fan out from the base, thumbs toward the body center.

    On a keyboard the right thumb is the leftmost right-hand digit and the
    left thumb the rightmost left-hand digit.
    """
    offsets = {}
    for finger in ALL_FINGERS:
        direction = 1.0 if finger.hand == RIGHT else -1.0
        offsets[finger] = (direction * (finger.digit - 3) * _REST_SPACING, 0.0, 0.0)
    return offsets


@dataclass(frozen=True)
class HandConfig:
    """Embodiment description: enabled digits plus motion limits (SI units)."""

    name: str = "ten-finger"
    fingers: tuple = ALL_FINGERS
    enabled: tuple = (True,) * 10
    span_max: float = DEFAULT_SPAN_MAX
    v_max: float = DEFAULT_V_MAX
    base_v_max: float = DEFAULT_BASE_V_MAX
    min_base_gap: float = DEFAULT_MIN_BASE_GAP
    rest_offsets: dict = field(default_factory=_default_rest_offsets)

    def __post_init__(self) -> None:
        if len(self.enabled) != len(self.fingers):
            raise InvalidConfigError("enabled mask length must match finger list")
        if self.span_max <= 0 or self.v_max <= 0 or self.base_v_max <= 0:
            raise InvalidConfigError("span_max, v_max and base_v_max must be > 0")
        if self.min_base_gap < 0:
            raise InvalidConfigError("min_base_gap must be >= 0")
        for hand in (LEFT, RIGHT):
            if not any(f.hand == hand and on for f, on in zip(self.fingers, self.enabled)):
                raise InvalidConfigError(f"no enabled finger on the {hand} hand")
        missing = [f for f in self.fingers if f not in self.rest_offsets]
        if missing:
            raise InvalidConfigError(f"missing rest offsets for {missing}")

    @property
    def enabled_fingers(self) -> tuple:
        return tuple(f for f, on in zip(self.fingers, self.enabled) if on)

    def disable_digit(self, digit: int, name: "str | None" = None) -> "HandConfig":
        """Copy with one digit switched off on both hands."""
        mask = tuple(on and f.digit != digit for f, on in zip(self.fingers, self.enabled))
        return HandConfig(
            name=name or f"{self.name}-no-{DIGIT_NAMES[digit - 1]}",
            fingers=self.fingers,
            enabled=mask,
            span_max=self.span_max,
            v_max=self.v_max,
            base_v_max=self.base_v_max,
            min_base_gap=self.min_base_gap,
            rest_offsets=self.rest_offsets,
        )

    @classmethod
    def default(cls) -> "HandConfig":
        return cls()

    @classmethod
    def four_finger(cls) -> "HandConfig":
        """Little fingers disabled: eight fingertips total."""
        return cls().disable_digit(5, name="four-finger")

    @classmethod
    def from_mapping(cls, values: dict) -> "HandConfig":
        """Build from a parsed config dict; unknown keys are rejected.

        Recognized keys: name, span_max, v_max, base_v_max, min_base_gap,
        disabled (list of digit numbers, applied to both hands), and
        rest_offset.<L|R><digit> = x y z overrides.
        """
        simple = {"name", "span_max", "v_max", "base_v_max", "min_base_gap", "disabled"}
        rest = _default_rest_offsets()
        kwargs: dict = {}
        disabled: tuple = ()
        for key, val in values.items():
            if key in simple:
                if key == "disabled":
                    vals = val if isinstance(val, tuple) else (val,)
                    disabled = tuple(int(v) for v in vals)
                elif key == "name":
                    kwargs["name"] = str(val)
                else:
                    kwargs[key] = float(val)
            elif key.startswith("rest_offset."):
                finger = FingerId.from_label(key.split(".", 1)[1])
                if not isinstance(val, tuple) or len(val) != 3:
                    raise InvalidConfigError(f"{key}: expected three coordinates")
                rest[finger] = tuple(float(x) for x in val)
            else:
                raise InvalidConfigError(f"unknown hand config key {key!r}")
        mask = tuple(f.digit not in disabled for f in ALL_FINGERS)
        return cls(enabled=mask, rest_offsets=rest, **kwargs)

    def snapshot(self) -> dict:
        """Flat dict describing the embodiment, for output headers."""
        return {
            "hand.name": self.name,
            "hand.enabled": ",".join(f.label() for f in self.enabled_fingers),
            "hand.span_max": self.span_max,
            "hand.v_max": self.v_max,
            "hand.base_v_max": self.base_v_max,
            "hand.min_base_gap": self.min_base_gap,
        }


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class HandState:
    """Immutable snapshot: enabled fingertips plus per-hand base x."""

    fingers: tuple
    fingertips: np.ndarray  # (n_enabled, 3)
    base_x: dict  # hand -> x in meters

    def fingertip(self, finger: FingerId) -> np.ndarray:
        return self.fingertips[self.fingers.index(finger)]

    def hand_spread(self, hand: str) -> float:
        """Max pairwise fingertip distance within one hand."""
        pts = self.fingertips[[i for i, f in enumerate(self.fingers) if f.hand == hand]]
        if len(pts) < 2:
            return 0.0
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=2)).max())

    def fingertip_slots(self, slots: int = 10) -> np.ndarray:
        """Fingertips scattered into a fixed-size slot array (disabled rows zero)."""
        out = np.zeros((slots, 3), dtype=np.float64)
        for finger, point in zip(self.fingers, self.fingertips):
            slot = ALL_FINGERS.index(finger)
            out[slot] = point
        return out


def init_hands(config: HandConfig, geom: KeyboardGeometry) -> HandState:
    """Rest pose: left base at 1/3 of keyboard width, right at 2/3."""
    ox, oy, oz = geom.origin
    base = {LEFT: ox + geom.width / 3.0, RIGHT: ox + 2.0 * geom.width / 3.0}
    fingers = config.enabled_fingers
    tips = np.empty((len(fingers), 3), dtype=np.float64)
    for i, finger in enumerate(fingers):
        dx, dy, dz = config.rest_offsets[finger]
        tips[i] = (base[finger.hand] + dx, oy + dy, oz + dz)
    return HandState(fingers=fingers, fingertips=_readonly(tips), base_x=dict(base))


def step_hand(
    state: HandState, targets: dict, dt: float, config: HandConfig, geom: KeyboardGeometry
) -> HandState:
    """Advance one control step toward assigned targets.

    ``targets`` maps enabled FingerId -> 3D point.  Assigned fingertips move
    toward their targets at up to v_max (arriving exactly when in range),
    each hand base moves toward the mean target x at up to base_v_max
    (staying put with no targets), and unassigned fingertips relax toward
    the rest pose around the updated base.  Finally each hand's fingertips
    are projected into the ball of radius span_max/2 around their centroid,
    which bounds the pairwise spread by span_max.
    """
    for finger in targets:
        if finger not in state.fingers:
            raise InvalidConfigError(f"target for disabled or unknown finger {finger}")
    step_reach = config.v_max * dt
    base_reach = config.base_v_max * dt
    _, oy, oz = geom.origin
    fingers = state.fingers
    n = len(fingers)

    new_base = dict(state.base_x)
    for hand in (LEFT, RIGHT):
        hand_targets = [targets[f][0] for f in targets if f.hand == hand]
        if hand_targets:
            goal_x = sum(float(x) for x in hand_targets) / len(hand_targets)
            delta = goal_x - new_base[hand]
            delta = max(-base_reach, min(base_reach, delta))
            new_base[hand] = new_base[hand] + delta

    goals = np.empty((n, 3), dtype=np.float64)
    for i, finger in enumerate(fingers):
        if finger in targets:
            goals[i] = targets[finger]
        else:
            dx, dy, dz = config.rest_offsets[finger]
            goals[i] = (new_base[finger.hand] + dx, oy + dy, oz + dz)

    delta = goals - state.fingertips
    dist = np.sqrt((delta**2).sum(axis=1))
    far = dist > step_reach
    tips = goals.copy()  # in-range fingertips arrive exactly
    if far.any():
        scale = (step_reach / dist[far])[:, None]
        tips[far] = state.fingertips[far] + delta[far] * scale

    # span projection per hand: clamp into ball of radius span_max/2 around centroid
    radius = config.span_max / 2.0
    for hand in (LEFT, RIGHT):
        idx = [i for i, f in enumerate(fingers) if f.hand == hand]
        if not idx:
            continue
        pts = tips[idx]
        centroid = pts.mean(axis=0)
        offsets = pts - centroid
        norms = np.sqrt((offsets**2).sum(axis=1))
        over = norms > radius
        if over.any():
            pts[over] = centroid + offsets[over] * (radius / norms[over])[:, None]
            tips[idx] = pts

    return HandState(fingers=fingers, fingertips=_readonly(tips), base_x=new_base)


def collision_flag(state: HandState, config: HandConfig) -> bool:
    """Forearm-collision proxy: hand bases closer than min_base_gap."""
    return abs(state.base_x[LEFT] - state.base_x[RIGHT]) < config.min_base_gap

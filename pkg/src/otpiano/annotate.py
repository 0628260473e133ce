"""End-to-end fingering annotation of a discretized song.

Rolls the hand surrogate through a goal sequence one control step at a
time: build the fingertip-to-key cost matrix from the current hand state,
solve the assignment, record the chosen pairs and their total moving
distance, then advance the hands toward the assigned press points.
Fingering therefore adapts to wherever the hands actually are, step by
step.  Songs are chunked into fixed-length episodes afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assign import InfeasibleError, build_cost_matrix, solve_assignment
from .hand import ALL_FINGERS, LEFT, FingerId, HandConfig, collision_flag, init_hands, step_hand
from .keyboard import KEY_COUNT, KeyboardGeometry, KeyState, key_for_pitch, key_press_point
from .midi import DEFAULT_STRETCH, GoalSequence, GoalStep, note_step_span, trim_shift
from .pig import PigRecord, midi_to_spelled
from .reward import (
    DEFAULT_PARAMS,
    RewardParams,
    collision_reward,
    ot_reward,
    press_reward,
    sustain_reward,
    total_reward,
)

DEFAULT_EPISODE_LEN = 550


class InfeasibleStepError(InfeasibleError):
    """A chord at some step exceeds the enabled finger count (strict mode)."""

    def __init__(self, step: int, chord_size: int, n_fingers: int):
        super().__init__(f"step {step}: chord of {chord_size} keys exceeds {n_fingers} fingers")
        self.step = step
        self.chord_size = chord_size
        self.n_fingers = n_fingers


class UnlabeledNoteError(ValueError):
    """A note has no finger label (dropped in best-effort mode)."""


@dataclass(frozen=True)
class StepAnnotation:
    """Solved placement for one step.

    ``pairs`` are (key, FingerId) with every active key labeled once;
    ``distance`` is the solved total moving cost before the hands move;
    ``pressed`` holds the keys whose assigned fingertip ended the step
    within the press threshold.
    """

    pairs: tuple = ()
    distance: float = 0.0
    ot: float = 1.0
    pressed: frozenset = frozenset()
    dropped_keys: tuple = ()
    collision: bool = False


_EMPTY_STEP = StepAnnotation()


@dataclass(frozen=True, eq=False)
class FingeringAnnotation:
    """Per-step fingering of a whole song plus the config that produced it."""

    steps: tuple
    dt: float
    embodiment: str
    snapshot: dict = field(default_factory=dict)
    fingertip_trace: "np.ndarray | None" = None  # (T, 10, 3) slot layout

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def mean_distance(self) -> float:
        """Mean moving distance over steps that had active keys."""
        dists = [s.distance for s in self.steps if s.pairs or s.dropped_keys]
        return float(np.mean(dists)) if dists else 0.0

    @property
    def dropped_step_count(self) -> int:
        return sum(1 for s in self.steps if s.dropped_keys)

    def finger_at(self, step: int, key: int) -> "FingerId | None":
        for k, finger in self.steps[step].pairs:
            if k == key:
                return finger
        return None


def annotate_song(
    goals: GoalSequence,
    hands: HandConfig,
    geom: KeyboardGeometry,
    params: RewardParams = DEFAULT_PARAMS,
    best_effort: bool = False,
) -> FingeringAnnotation:
    """Annotate every step of a goal sequence with an optimal placement.

    Strict mode raises InfeasibleStepError when a chord exceeds the enabled
    finger count; best-effort mode assigns the cheapest subset and records
    the dropped keys.  The whole rollout is deterministic.
    """
    state = init_hands(hands, geom)
    n_fingers = len(state.fingers)
    finger_row = {finger: i for i, finger in enumerate(state.fingers)}
    slot_index = [ALL_FINGERS.index(finger) for finger in state.fingers]
    steps = []
    trace = np.zeros((len(goals.steps), 10, 3), dtype=np.float64)
    for t, goal in enumerate(goals.steps):
        active = sorted(goal.active)
        if active:
            if len(active) > n_fingers and not best_effort:
                raise InfeasibleStepError(t, len(active), n_fingers)
            matrix = build_cost_matrix(state.fingertips, state.fingers, active, geom)
            solution = solve_assignment(matrix, best_effort=best_effort)
            pairs = tuple((matrix.key_ids[r], matrix.finger_ids[c]) for r, c in solution.pairs)
            distance = solution.total_cost
            dropped = tuple(matrix.key_ids[r] for r in solution.dropped_rows)
        else:
            pairs = ()
            distance = 0.0
            dropped = ()
        targets = {finger: key_press_point(key, geom) for key, finger in pairs}
        state = step_hand(state, targets, goals.dt, hands, geom)
        pressed = frozenset(
            key
            for key, finger in pairs
            if float(np.linalg.norm(state.fingertips[finger_row[finger]] - np.asarray(targets[finger])))
            < params.threshold
        )
        steps.append(
            StepAnnotation(
                pairs=pairs,
                distance=distance,
                ot=ot_reward(distance, params),
                pressed=pressed,
                dropped_keys=dropped,
                collision=collision_flag(state, hands),
            )
        )
        trace[t, slot_index] = state.fingertips
    trace.flags.writeable = False
    snapshot = {"dt": goals.dt, **hands.snapshot(), **geom.snapshot(), **params.snapshot()}
    return FingeringAnnotation(
        steps=tuple(steps),
        dt=goals.dt,
        embodiment=hands.name,
        snapshot=snapshot,
        fingertip_trace=trace,
    )


# ---------------------------------------------------------------------------
# Episode chunking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Episode:
    """Fixed-length window of a song; the tail is padded with empty steps."""

    index: int
    start_step: int
    length: int
    n_real: int
    goal_steps: tuple
    annotation_steps: tuple

    @property
    def n_padded(self) -> int:
        return self.length - self.n_real


def chunk_episodes(goals: GoalSequence, annotation: FingeringAnnotation, episode_len: int = DEFAULT_EPISODE_LEN) -> list:
    """Split a song into consecutive equal-length episodes.

    The final window is zero-padded with silent goals and empty annotation
    steps so every episode has exactly ``episode_len`` steps; concatenating
    the real parts reproduces the song.
    """
    if episode_len <= 0:
        raise ValueError("episode_len must be > 0")
    if len(goals.steps) != len(annotation.steps):
        raise ValueError("goal sequence and annotation disagree on step count")
    total = len(goals.steps)
    episodes = []
    n_episodes = math.ceil(total / episode_len) if total else 0
    for e in range(n_episodes):
        start = e * episode_len
        real = min(episode_len, total - start)
        pad = episode_len - real
        episodes.append(
            Episode(
                index=e,
                start_step=start,
                length=episode_len,
                n_real=real,
                goal_steps=tuple(goals.steps[start : start + real]) + (GoalStep(),) * pad,
                annotation_steps=tuple(annotation.steps[start : start + real]) + (_EMPTY_STEP,) * pad,
            )
        )
    return episodes


# ---------------------------------------------------------------------------
# PIG export
# ---------------------------------------------------------------------------


def annotation_to_pig(
    annotation: FingeringAnnotation,
    notes,
    stretch: float = DEFAULT_STRETCH,
    trim_silence: bool = True,
    on_unlabeled: str = "error",
) -> list:
    """Label each note onset with the finger assigned at its first step.

    The notes and the stretch/trim settings must match the discretization
    the annotation was produced from.  Right-hand fingers become positive
    digits on channel 0, left-hand fingers negative digits on channel 1.
    A note without a label (dropped in best-effort mode, or off-keyboard)
    raises UnlabeledNoteError, or is skipped with ``on_unlabeled="skip"``.
    """
    if on_unlabeled not in ("error", "skip"):
        raise ValueError("on_unlabeled must be 'error' or 'skip'")
    notes = sorted(notes, key=lambda n: (n.onset, n.pitch, n.channel))
    # same playable-note shift as discretize, so step indices line up
    shift = trim_shift(notes, stretch) if (trim_silence and notes) else 0.0
    records = []
    note_id = 0
    for note in notes:
        finger = None
        try:
            key = key_for_pitch(note.pitch)
        except ValueError:
            key = None
        if key is not None:
            first, _end = note_step_span(note, annotation.dt, stretch, shift)
            if 0 <= first < len(annotation.steps):
                finger = annotation.finger_at(first, key)
        if finger is None:
            if on_unlabeled == "error":
                raise UnlabeledNoteError(f"note pitch {note.pitch} at {note.onset:.3f}s has no finger label")
            continue
        digit = finger.digit if finger.hand != LEFT else -finger.digit
        records.append(
            PigRecord(
                note_id=note_id,
                onset=note.onset,
                offset=note.offset,
                spelled_pitch=midi_to_spelled(note.pitch),
                onset_velocity=note.velocity,
                offset_velocity=0,
                channel=1 if finger.hand == LEFT else 0,
                finger=str(digit),
            )
        )
        note_id += 1
    return records


# ---------------------------------------------------------------------------
# Scoring and text serialization
# ---------------------------------------------------------------------------


def score_annotation(goals: GoalSequence, annotation: FingeringAnnotation, params: RewardParams = DEFAULT_PARAMS) -> list:
    """Per-step reward breakdown of a surrogate rollout.

    Key depths are idealized from the reached keys (1 when the assigned
    fingertip arrived, 0 otherwise), sustain is scored at its target, and
    energy is zero: the surrogate has no pedal or torque model.
    """
    rows = []
    for goal, step in zip(goals.steps, annotation.steps):
        depths = [0.0] * KEY_COUNT
        for key in step.pressed:
            depths[key] = 1.0
        key_state = KeyState(depths=tuple(depths), sustain=float(goal.sustain))
        false_press = bool(step.pressed - goal.active)
        rows.append(
            total_reward(
                ot=step.ot,
                press=press_reward(key_state, goal.active, false_press, params),
                sustain=sustain_reward(float(goal.sustain), float(goal.sustain), params),
                collision=collision_reward(step.collision),
                energy=0.0,
                params=params,
            )
        )
    return rows


ANNOTATION_HEADER = "# otpiano annotation v1"


def write_annotation_text(annotation: FingeringAnnotation, extra_snapshot: "dict | None" = None) -> str:
    """One line per step: ``step<TAB>ot_distance<TAB>key:finger;...``.

    Pairs are sorted by key; the header embeds the config snapshot (plus
    any run-level entries in ``extra_snapshot``).  Dropped keys
    (best-effort) appear as ``key:-``.
    """
    snapshot = {**annotation.snapshot, **(extra_snapshot or {})}
    lines = [ANNOTATION_HEADER, f"# embodiment = {annotation.embodiment}"]
    for key in sorted(snapshot):
        lines.append(f"# {key} = {snapshot[key]}")
    for t, step in enumerate(annotation.steps):
        cells = [f"{key}:{finger.label()}" for key, finger in sorted(step.pairs)]
        cells.extend(f"{key}:-" for key in step.dropped_keys)
        lines.append(f"{t}\t{step.distance!r}\t{';'.join(cells)}")
    return "\n".join(lines) + "\n"


def parse_annotation_text(text: str) -> list:
    """Parse the annotation text format into (distance, pairs, dropped) rows."""
    rows = []
    for line in text.splitlines():
        line = line.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        # the pairs field is empty on silent steps, so keep trailing tabs
        step_field, dist_field, pairs_field = line.split("\t")
        if int(step_field) != len(rows):
            raise ValueError(f"step index {step_field} out of order")
        pairs = []
        dropped = []
        for cell in pairs_field.split(";") if pairs_field else []:
            key_str, finger_str = cell.split(":")
            if finger_str == "-":
                dropped.append(int(key_str))
            else:
                pairs.append((int(key_str), FingerId.from_label(finger_str)))
        rows.append((float(dist_field), tuple(pairs), tuple(dropped)))
    return rows

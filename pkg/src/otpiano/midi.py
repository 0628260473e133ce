"""Standard MIDI file parsing and time discretization into per-step goals.

Reads SMF format 0/1 byte-exactly (no external MIDI dependency), converts
ticks to seconds through the tempo map, and discretizes note intervals onto
a fixed control grid.  Each grid step carries the set of keys that must be
down plus a binary sustain-pedal target; a lookahead window of steps is
flattened into goal vectors and full observation vectors.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .keyboard import KEY_COUNT, MAX_PITCH, MIN_PITCH, KeyState, key_for_pitch

DEFAULT_DT = 0.05
DEFAULT_STRETCH = 1.25
DEFAULT_LOOKAHEAD = 10  # future steps; window length L = lookahead + 1
GOAL_STEP_DIM = KEY_COUNT + 1  # 88 key bits + 1 sustain bit
HAND_STATE_DIM = 46
FINGERTIP_SLOTS = 10
OBSERVATION_DIM = 1144
ACTION_DIM = 39

_SUSTAIN_CONTROLLER = 64
_SUSTAIN_ON = 64  # CC values >= this count as pedal down
_DEFAULT_US_PER_BEAT = 500000  # 120 bpm until the first tempo event
_STEP_EPS = 1e-9  # tolerance for grid-boundary comparisons


class MalformedMidiError(ValueError):
    """Structurally invalid MIDI data (bad header, chunk, or event)."""


class EmptySongError(ValueError):
    """No notes where at least one is required."""


class DimensionMismatchError(ValueError):
    """Vector component has the wrong shape."""


@dataclass(frozen=True)
class NoteEvent:
    """One matched note: pitch with onset/offset in seconds."""

    pitch: int
    onset: float
    offset: float
    velocity: int
    channel: int

    def __post_init__(self) -> None:
        if self.offset <= self.onset:
            raise ValueError(f"offset {self.offset} must exceed onset {self.onset}")


@dataclass(frozen=True)
class PedalEvent:
    """Sustain-pedal (CC64) change: value 0..127 at a time in seconds."""

    time: float
    value: int


@dataclass(frozen=True)
class MidiSong:
    """Parse result: matched notes, pedal events, and skipped-event reports."""

    notes: tuple[NoteEvent, ...]
    pedal: tuple[PedalEvent, ...]
    problems: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# SMF parsing
# ---------------------------------------------------------------------------


class _Reader:
    """Byte cursor with bounds checking."""

    def __init__(self, data: bytes, start: int, end: int):
        self.data = data
        self.pos = start
        self.end = end

    def remaining(self) -> int:
        return self.end - self.pos

    def u8(self) -> int:
        if self.pos >= self.end:
            raise MalformedMidiError("unexpected end of track data")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def peek(self) -> int:
        if self.pos >= self.end:
            raise MalformedMidiError("unexpected end of track data")
        return self.data[self.pos]

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise MalformedMidiError("unexpected end of track data")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MalformedMidiError("variable-length quantity longer than 4 bytes")


def _seconds_at(tick: int, segments: list[tuple[int, float, float]]) -> float:
    """Convert an absolute tick to seconds via tempo segments.

    Each segment is (start_tick, start_seconds, seconds_per_tick); segments
    are sorted by start_tick and the last one extends to infinity.
    """
    lo, hi = 0, len(segments) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if segments[mid][0] <= tick:
            lo = mid
        else:
            hi = mid - 1
    start_tick, start_sec, sec_per_tick = segments[lo]
    return start_sec + (tick - start_tick) * sec_per_tick


def parse_midi(data: bytes) -> MidiSong:
    """Parse SMF format 0/1 bytes into note and pedal events.

    Note on/off pairs are matched per (track, channel, pitch) first-in
    first-out; a note-on with velocity 0 counts as a note-off.  The tempo
    map is merged across tracks and applied to convert ticks to seconds.
    Unmatched note-offs and dangling note-ons are skipped and reported in
    ``MidiSong.problems``.
    """
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedMidiError("missing MThd header")
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6:
        raise MalformedMidiError(f"header length {header_len} < 6")
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise MalformedMidiError(f"unsupported SMF format {fmt}")
    if fmt == 0 and ntracks != 1:
        raise MalformedMidiError(f"format 0 file declares {ntracks} tracks")

    smpte = bool(division & 0x8000)
    if smpte:
        fps = 256 - (division >> 8)  # stored as negative two's complement
        ticks_per_frame = division & 0xFF
        if fps <= 0 or ticks_per_frame == 0:
            raise MalformedMidiError("invalid SMPTE division")
        fixed_sec_per_tick = 1.0 / (fps * ticks_per_frame)
    elif division == 0:
        raise MalformedMidiError("zero ticks per quarter note")

    # chunk scan: collect MTrk spans, skip unknown chunk types
    tracks: list[tuple[int, int]] = []
    pos = 8 + header_len
    while pos < len(data):
        if pos + 8 > len(data):
            raise MalformedMidiError("truncated chunk header")
        kind = data[pos : pos + 4]
        length = struct.unpack(">I", data[pos + 4 : pos + 8])[0]
        if pos + 8 + length > len(data):
            raise MalformedMidiError(f"truncated {kind!r} chunk")
        if kind == b"MTrk":
            tracks.append((pos + 8, pos + 8 + length))
        pos += 8 + length
    if len(tracks) < ntracks:
        raise MalformedMidiError(f"header declares {ntracks} tracks, found {len(tracks)}")

    # pass 1: raw events with absolute ticks
    tempo_events: list[tuple[int, int]] = []  # (tick, us_per_beat)
    raw_notes: list[list[tuple]] = []
    raw_pedal: list[tuple[int, int]] = []
    problems: list[str] = []

    for track_no, (start, end) in enumerate(tracks):
        reader = _Reader(data, start, end)
        tick = 0
        running_status = None
        events: list[tuple] = []
        while reader.remaining() > 0:
            tick += reader.varlen()
            status = reader.peek()
            if status >= 0x80:
                reader.u8()
                if status < 0xF0:
                    running_status = status
            else:
                if running_status is None:
                    raise MalformedMidiError(f"track {track_no}: data byte {status:#x} without running status")
                status = running_status
            if status == 0xFF:  # meta
                meta_type = reader.u8()
                length = reader.varlen()
                payload = reader.take(length)
                if meta_type == 0x51:
                    if length != 3:
                        raise MalformedMidiError("set-tempo event with bad length")
                    tempo_events.append((tick, int.from_bytes(payload, "big")))
            elif status in (0xF0, 0xF7):  # sysex
                reader.take(reader.varlen())
            else:
                kind = status & 0xF0
                channel = status & 0x0F
                if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                    d1 = reader.u8()
                    d2 = reader.u8()
                    if kind == 0x90 and d2 > 0:
                        events.append(("on", tick, channel, d1, d2))
                    elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                        events.append(("off", tick, channel, d1))
                    elif kind == 0xB0 and d1 == _SUSTAIN_CONTROLLER:
                        raw_pedal.append((tick, d2))
                elif kind in (0xC0, 0xD0):
                    reader.u8()
                else:
                    raise MalformedMidiError(f"track {track_no}: bad status byte {status:#x}")
        raw_notes.append(events)

    # tempo map -> tick->seconds segments
    if smpte:
        segments = [(0, 0.0, fixed_sec_per_tick)]
    else:
        tempo_events.sort(key=lambda pair: pair[0])
        segments = []
        cur_tick, cur_sec = 0, 0.0
        cur_us = _DEFAULT_US_PER_BEAT
        segments.append((0, 0.0, cur_us / (division * 1e6)))
        for t_tick, us in tempo_events:
            cur_sec += (t_tick - cur_tick) * cur_us / (division * 1e6)
            cur_tick = t_tick
            cur_us = us
            segments.append((cur_tick, cur_sec, cur_us / (division * 1e6)))

    # pass 2: FIFO matching per (channel, pitch) within each track
    notes: list[NoteEvent] = []
    for track_no, events in enumerate(raw_notes):
        open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for ev in events:
            if ev[0] == "on":
                _, tick, channel, pitch, velocity = ev
                open_notes.setdefault((channel, pitch), []).append((tick, velocity))
            else:
                _, tick, channel, pitch = ev
                queue = open_notes.get((channel, pitch))
                if not queue:
                    problems.append(f"track {track_no}: note-off without note-on (pitch {pitch}, tick {tick})")
                    continue
                on_tick, velocity = queue.pop(0)
                onset = _seconds_at(on_tick, segments)
                offset = _seconds_at(tick, segments)
                if offset <= onset:
                    problems.append(f"track {track_no}: zero-length note skipped (pitch {pitch}, tick {on_tick})")
                    continue
                notes.append(NoteEvent(pitch, onset, offset, velocity, channel))
        for (channel, pitch), queue in sorted(open_notes.items()):
            for on_tick, _velocity in queue:
                problems.append(f"track {track_no}: note-on without note-off (pitch {pitch}, tick {on_tick})")

    notes.sort(key=lambda n: (n.onset, n.pitch, n.channel))
    pedal = tuple(
        PedalEvent(_seconds_at(tick, segments), value)
        for tick, value in sorted(raw_pedal, key=lambda pair: pair[0])
    )
    return MidiSong(notes=tuple(notes), pedal=pedal, problems=tuple(problems))


def load_midi(path) -> MidiSong:
    """Parse a MIDI file from disk."""
    with open(path, "rb") as fh:
        return parse_midi(fh.read())


# ---------------------------------------------------------------------------
# Discretization onto the control grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoalStep:
    """Goal for one control step: keys that must be down plus sustain bit."""

    active: frozenset = frozenset()
    sustain: int = 0


@dataclass(frozen=True)
class GoalSequence:
    """Time-discretized goal: one GoalStep per control step of length dt."""

    steps: tuple[GoalStep, ...]
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")

    def __len__(self) -> int:
        return len(self.steps)

    def key_onsets(self):
        """Yield (step, key) whenever a key turns active."""
        prev: frozenset = frozenset()
        for t, step in enumerate(self.steps):
            for key in sorted(step.active - prev):
                yield t, key
            prev = step.active


def _first_step(time: float, dt: float) -> int:
    return int(math.floor(time / dt + _STEP_EPS))


def _end_step(time: float, dt: float) -> int:
    """Exclusive end step of an interval finishing at ``time``."""
    return int(math.ceil(time / dt - _STEP_EPS))


def note_step_span(note: NoteEvent, dt: float, stretch: float, shift: float) -> tuple[int, int]:
    """Half-open step range [first, end) a note occupies after stretch/shift."""
    onset = note.onset * stretch - shift
    offset = note.offset * stretch - shift
    return _first_step(onset, dt), _end_step(offset, dt)


def keyboard_notes(notes) -> list:
    """The subset of notes within the 88-key pitch range, order preserved."""
    return [n for n in notes if MIN_PITCH <= n.pitch <= MAX_PITCH]


def trim_shift(notes, stretch: float) -> float:
    """Time shift that maps the earliest playable stretched onset to t = 0."""
    playable = keyboard_notes(notes)
    if not playable:
        raise EmptySongError("cannot trim silence: song has no playable notes")
    return min(n.onset for n in playable) * stretch


def discretize(
    notes,
    dt: float = DEFAULT_DT,
    stretch: float = DEFAULT_STRETCH,
    trim_silence: bool = True,
    pedal=(),
) -> GoalSequence:
    """Discretize note events into a GoalSequence.

    All times are multiplied by ``stretch`` first; with ``trim_silence`` the
    grid starts at the earliest onset.  A key is active at step t when the
    stretched [onset, offset) interval intersects [t*dt, (t+1)*dt); boundary
    comparisons carry a 1e-9-step tolerance.  The sustain bit samples the
    pedal state (CC value >= 64) at each step start.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if stretch <= 0.0:
        raise ValueError("stretch must be > 0")
    notes = list(notes)
    kept = keyboard_notes(notes)
    if len(kept) < len(notes):
        warnings.warn(
            f"dropped {len(notes) - len(kept)} notes outside the 88-key range",
            stacklevel=2,
        )
    if not kept:
        if trim_silence:
            raise EmptySongError("cannot trim silence: song has no playable notes")
        return GoalSequence(steps=(), dt=dt)

    shift = trim_shift(kept, stretch) if trim_silence else 0.0
    length = 0
    spans = []
    for note in kept:
        first, end = note_step_span(note, dt, stretch, shift)
        spans.append((key_for_pitch(note.pitch), max(first, 0), end))
        length = max(length, end)

    active: list[set] = [set() for _ in range(length)]
    for key, first, end in spans:
        for t in range(first, min(end, length)):
            active[t].add(key)

    # pedal state sampled at step starts
    pedal_times = [(p.time * stretch - shift, p.value) for p in pedal]
    pedal_times.sort(key=lambda pair: pair[0])
    sustain = [0] * length
    idx = 0
    value = 0
    for t in range(length):
        step_start = t * dt
        while idx < len(pedal_times) and pedal_times[idx][0] <= step_start + _STEP_EPS * dt:
            value = pedal_times[idx][1]
            idx += 1
        sustain[t] = 1 if value >= _SUSTAIN_ON else 0

    steps = tuple(GoalStep(active=frozenset(a), sustain=s) for a, s in zip(active, sustain))
    return GoalSequence(steps=steps, dt=dt)


# ---------------------------------------------------------------------------
# Goal and observation vectors
# ---------------------------------------------------------------------------


def goal_vector(seq: GoalSequence, t: int, lookahead_window: int = DEFAULT_LOOKAHEAD + 1) -> np.ndarray:
    """Binary goal vector for steps t .. t+L-1, flattened per step.

    Each step contributes 88 key bits plus one sustain bit; steps past the
    end of the sequence are all zero.  Length is always L*89.
    """
    if t < 0:
        raise ValueError("step index must be >= 0")
    if lookahead_window < 1:
        raise ValueError("lookahead window must be >= 1")
    out = np.zeros(lookahead_window * GOAL_STEP_DIM, dtype=np.float64)
    for l in range(lookahead_window):
        idx = t + l
        if idx >= len(seq.steps):
            break
        step = seq.steps[idx]
        base = l * GOAL_STEP_DIM
        for key in step.active:
            out[base + key] = 1.0
        out[base + KEY_COUNT] = float(step.sustain)
    return out


def observation_layout(lookahead_window: int = DEFAULT_LOOKAHEAD + 1) -> dict:
    """Block name -> (start, stop) index ranges of the observation vector."""
    L = lookahead_window
    blocks = [
        ("goal_keys", KEY_COUNT * L),
        ("goal_sustain", L),
        ("key_joints", KEY_COUNT),
        ("sustain_state", 1),
        ("fingertips", 3 * FINGERTIP_SLOTS),
        ("hand_state", HAND_STATE_DIM),
    ]
    layout = {}
    start = 0
    for name, size in blocks:
        layout[name] = (start, start + size)
        start += size
    return layout


def assemble_observation(goal: np.ndarray, keys: KeyState, fingertips, hand_state) -> np.ndarray:
    """Concatenate goal, piano state, fingertip and hand blocks.

    The interleaved goal vector is split into its key and sustain planes so
    the result follows the canonical block order (88L, L, 88, 1, 30, 46);
    with the default 11-step window the result has 1144 entries.
    """
    goal = np.asarray(goal, dtype=np.float64)
    if goal.ndim != 1 or goal.size % GOAL_STEP_DIM != 0 or goal.size == 0:
        raise DimensionMismatchError(f"goal vector length {goal.size} is not a multiple of {GOAL_STEP_DIM}")
    L = goal.size // GOAL_STEP_DIM
    per_step = goal.reshape(L, GOAL_STEP_DIM)

    tips = np.asarray(fingertips, dtype=np.float64)
    if tips.shape != (FINGERTIP_SLOTS, 3):
        raise DimensionMismatchError(f"fingertips must have shape ({FINGERTIP_SLOTS}, 3), got {tips.shape}")
    hand = np.asarray(hand_state, dtype=np.float64)
    if hand.shape != (HAND_STATE_DIM,):
        raise DimensionMismatchError(f"hand state must have shape ({HAND_STATE_DIM},), got {hand.shape}")

    return np.concatenate(
        [
            per_step[:, :KEY_COUNT].ravel(),
            per_step[:, KEY_COUNT],
            np.asarray(keys.depths, dtype=np.float64),
            np.array([keys.sustain], dtype=np.float64),
            tips.ravel(),
            hand,
        ]
    )


# ---------------------------------------------------------------------------
# Goal sequence text format
# ---------------------------------------------------------------------------


def goal_to_text(seq: GoalSequence) -> str:
    """Render a GoalSequence as text: one step per line.

    Line format: ``<step>\\t<sustain>\\t<key,key,...>`` with keys ascending;
    a ``# dt = ...`` header keeps the grid period.
    """
    lines = [f"# dt = {seq.dt!r}"]
    for t, step in enumerate(seq.steps):
        keys = ",".join(str(k) for k in sorted(step.active))
        lines.append(f"{t}\t{step.sustain}\t{keys}")
    return "\n".join(lines) + "\n"


def goal_from_text(text: str) -> GoalSequence:
    """Parse the goal text format back into a GoalSequence."""
    dt = DEFAULT_DT
    steps: list[GoalStep] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            body = line.lstrip().lstrip("#").strip()
            if body.startswith("dt"):
                dt = float(body.split("=", 1)[1])
            continue
        # the keys field is empty on silent steps, so keep trailing tabs
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
        index, sustain, keys_field = parts
        if int(index) != len(steps):
            raise ValueError(f"line {lineno}: step index {index} out of order")
        active = frozenset(int(k) for k in keys_field.split(",") if k != "")
        steps.append(GoalStep(active=active, sustain=int(sustain)))
    return GoalSequence(steps=tuple(steps), dt=dt)

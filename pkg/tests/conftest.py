"""Shared test helpers: a minimal standalone MIDI byte writer.

The writer is deliberately independent of the package's parser so golden
files exercise a real encode/decode boundary.
"""

from __future__ import annotations

import struct

import pytest


def vlq(value: int) -> bytes:
    """Encode a variable-length quantity."""
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def note_on(channel: int, pitch: int, velocity: int = 80) -> bytes:
    return bytes((0x90 | channel, pitch, velocity))


def note_off(channel: int, pitch: int, velocity: int = 0) -> bytes:
    return bytes((0x80 | channel, pitch, velocity))


def control_change(channel: int, controller: int, value: int) -> bytes:
    return bytes((0xB0 | channel, controller, value))


def set_tempo(us_per_beat: int) -> bytes:
    return bytes((0xFF, 0x51, 0x03)) + us_per_beat.to_bytes(3, "big")


END_OF_TRACK = bytes((0xFF, 0x2F, 0x00))


def track_chunk(events) -> bytes:
    """events: iterable of (delta_ticks, event_bytes); end-of-track appended."""
    body = b"".join(vlq(delta) + payload for delta, payload in events)
    body += vlq(0) + END_OF_TRACK
    return b"MTrk" + struct.pack(">I", len(body)) + body


def midi_bytes(tracks, division: int = 480, fmt: int = 1) -> bytes:
    header = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    return header + b"".join(track_chunk(t) for t in tracks)


def simple_song(notes, division: int = 480, us_per_beat: int = 500000, pedal=()) -> bytes:
    """Single-track file from absolute-tick note tuples.

    ``notes``: (pitch, on_tick, off_tick[, velocity[, channel]]);
    ``pedal``: (tick, cc64_value).
    """
    timeline = [(0, set_tempo(us_per_beat))]
    events = []
    for spec in notes:
        pitch, on_tick, off_tick = spec[:3]
        velocity = spec[3] if len(spec) > 3 else 80
        channel = spec[4] if len(spec) > 4 else 0
        events.append((on_tick, 0, note_on(channel, pitch, velocity)))
        events.append((off_tick, 1, note_off(channel, pitch)))
    for tick, value in pedal:
        events.append((tick, 0, control_change(0, 64, value)))
    events.sort(key=lambda e: (e[0], e[1]))
    last = 0
    for tick, _order, payload in events:
        timeline.append((tick - last, payload))
        last = tick
    return midi_bytes([timeline], division=division)


@pytest.fixture
def middle_c_file() -> bytes:
    # one quarter note at 120 bpm: pitch 60, 0.0 .. 0.5 s
    return simple_song([(60, 0, 480)])

"""PIG v1 fingering files: one tab-separated record per note.

Field order: note id, onset, offset, spelled pitch, onset velocity,
offset velocity, channel (0 = right hand, 1 = left hand), finger.
Finger labels are signed digits 1..5 (negative = left hand); a
substitution like ``1_2`` is kept verbatim.  Lines starting with ``//``
are headers and are skipped on parse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

PIG_HEADER = "//Version: PianoFingering_v170101"

_NOTE_LETTER_SEMITONE = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_SEMITONE_SHARP_NAME = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]
_PITCH_RE = re.compile(r"^([A-G])([#b]*)(-?\d+)$")
_FINGER_TOKEN_RE = re.compile(r"^-?[1-5]$")


class MalformedPigLineError(ValueError):
    """A PIG line that does not parse; carries the 1-based line number."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


def spelled_to_midi(name: str) -> int:
    """Convert a spelled pitch like ``C4`` or ``Bb3`` to a MIDI number (C4 = 60)."""
    match = _PITCH_RE.match(name)
    if not match:
        raise ValueError(f"bad spelled pitch {name!r}")
    letter, accidentals, octave = match.groups()
    semitone = _NOTE_LETTER_SEMITONE[letter]
    for acc in accidentals:
        semitone += 1 if acc == "#" else -1
    return 12 * (int(octave) + 1) + semitone


def midi_to_spelled(pitch: int) -> str:
    """Spell a MIDI number with sharps (60 -> ``C4``)."""
    if not 0 <= pitch <= 127:
        raise ValueError(f"MIDI pitch {pitch} outside [0, 127]")
    octave, semitone = divmod(pitch, 12)
    return f"{_SEMITONE_SHARP_NAME[semitone]}{octave - 1}"


def _check_finger(token: str) -> None:
    parts = token.split("_")
    if not 1 <= len(parts) <= 2 or not all(_FINGER_TOKEN_RE.match(p) for p in parts):
        raise ValueError(f"bad finger label {token!r}")


@dataclass(frozen=True)
class PigRecord:
    """One PIG note record; ``finger`` keeps the file token verbatim."""

    note_id: int
    onset: float
    offset: float
    spelled_pitch: str
    onset_velocity: int
    offset_velocity: int
    channel: int
    finger: str

    def __post_init__(self) -> None:
        if self.offset < self.onset:
            raise ValueError("offset before onset")
        _check_finger(self.finger)
        spelled_to_midi(self.spelled_pitch)  # validates spelling

    @property
    def pitch(self) -> int:
        return spelled_to_midi(self.spelled_pitch)

    @property
    def primary_finger(self) -> int:
        """First digit of the label (the finger that strikes the key)."""
        return int(self.finger.split("_", 1)[0])

    @property
    def substitution(self) -> "int | None":
        """Second digit for a mid-note finger substitution, if any."""
        parts = self.finger.split("_", 1)
        return int(parts[1]) if len(parts) == 2 else None


def parse_pig(text: str) -> list[PigRecord]:
    """Parse PIG text into records, skipping ``//`` header lines."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("//"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 8:
            raise MalformedPigLineError(lineno, f"expected 8 tab-separated fields, got {len(fields)}")
        try:
            records.append(
                PigRecord(
                    note_id=int(fields[0]),
                    onset=float(fields[1]),
                    offset=float(fields[2]),
                    spelled_pitch=fields[3],
                    onset_velocity=int(fields[4]),
                    offset_velocity=int(fields[5]),
                    channel=int(fields[6]),
                    finger=fields[7],
                )
            )
        except ValueError as exc:
            raise MalformedPigLineError(lineno, str(exc)) from exc
    return records


def write_pig(records, header_comments=()) -> str:
    """Render records as canonical PIG text.

    Floats use their shortest round-tripping form so parse(write(x))
    recovers every field exactly.  Extra ``//`` comment lines can carry
    config snapshots.
    """
    lines = [PIG_HEADER]
    lines.extend(f"// {c}" for c in header_comments)
    for rec in records:
        lines.append(
            "\t".join(
                (
                    str(rec.note_id),
                    repr(rec.onset),
                    repr(rec.offset),
                    rec.spelled_pitch,
                    str(rec.onset_velocity),
                    str(rec.offset_velocity),
                    str(rec.channel),
                    rec.finger,
                )
            )
        )
    return "\n".join(lines) + "\n"


def load_pig(path) -> list[PigRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pig(fh.read())


def save_pig(records, path, header_comments=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_pig(records, header_comments))

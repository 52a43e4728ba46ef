"""Core note types for monophonic melody transcription.

A transcribed melody is a sequence of notes. Each note is a quadruple of
onset time, MIDI pitch, offset time, and an optional note value counted in
sixteenth-note units. Sequences are monophonic: consecutive notes may touch
(offset equal to the next onset) but never overlap.
"""

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

MIDI_MIN = 0
MIDI_MAX = 127
VALUE_MIN = 1
VALUE_MAX = 32


class DataFormatError(ValueError):
    """An input file does not match its documented format."""


def round_half_away(x: float) -> float:
    """Round to the nearest integer with exact halves going away from zero.

    Python's round() rounds halves to even, which is the wrong convention
    for both frame quantization and rest estimation here. Operates on a
    value pre-rounded to 6 decimals so binary float noise cannot flip an
    intended exact half.
    """
    x = round(x, 6)
    if x >= 0:
        return math.floor(x + 0.5)
    return -math.floor(-x + 0.5)


@dataclass(frozen=True)
class NoteEvent:
    """One sung note: [onset, offset) in seconds, MIDI pitch, optional value."""

    onset: float
    offset: float
    pitch: int
    value: int | None = None

    def __post_init__(self) -> None:
        if not self.onset < self.offset:
            raise ValueError(
                f"note onset {self.onset} must precede offset {self.offset}"
            )
        if not MIDI_MIN <= self.pitch <= MIDI_MAX:
            raise ValueError(
                f"pitch {self.pitch} outside MIDI range {MIDI_MIN}..{MIDI_MAX}"
            )
        if self.value is not None and not VALUE_MIN <= self.value <= VALUE_MAX:
            raise ValueError(
                f"note value {self.value} outside {VALUE_MIN}..{VALUE_MAX}"
            )

    @property
    def duration(self) -> float:
        return self.offset - self.onset


NoteSequence = tuple[NoteEvent, ...]


@dataclass(frozen=True)
class SegmentWindow:
    """Analysis window [start, start + length] in seconds.

    Onsets belong to the window when start <= t < start + length; an offset
    landing exactly on start + length still belongs to this window, so a note
    ending on the boundary encodes inside it rather than the next one.
    """

    start: float
    length: float

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"window start {self.start} must be non-negative")
        if self.length <= 0:
            raise ValueError(f"window length {self.length} must be positive")

    @property
    def end(self) -> float:
        return self.start + self.length


def validate_sequence(notes: Sequence[NoteEvent]) -> list[str]:
    """Check the monophonic ordering invariant over a note sequence.

    Per-note invariants (onset before offset, pitch and value ranges) are
    enforced by NoteEvent itself, so only cross-note ordering is checked:
    each note must end at or before the next one starts. Returns one message
    per violation; an empty list means the sequence is valid.
    """
    problems: list[str] = []
    for i in range(len(notes) - 1):
        a, b = notes[i], notes[i + 1]
        if a.offset > b.onset:
            problems.append(
                f"notes {i} and {i + 1} overlap: offset {a.offset} is after"
                f" onset {b.onset}"
            )
    return problems


def _require_number(rec: dict, key: str, path: str, lineno: int) -> float:
    if key not in rec:
        raise DataFormatError(f"{path}:{lineno}: missing field {key!r}")
    val = rec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise DataFormatError(f"{path}:{lineno}: field {key!r} must be a number")
    return float(val)


def read_notes_jsonl(path: str) -> NoteSequence:
    """Read a note sequence from a JSONL file.

    One object per line with keys onset, offset, pitch and value; value may
    be null (or absent) for unvalued notes. Raises DataFormatError for
    malformed lines or out-of-range fields.
    """
    notes: list[NoteEvent] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise DataFormatError(f"{path}:{lineno}: expected a JSON object")
            onset = _require_number(rec, "onset", path, lineno)
            offset = _require_number(rec, "offset", path, lineno)
            pitch = rec.get("pitch")
            if isinstance(pitch, bool) or not isinstance(pitch, int):
                raise DataFormatError(f"{path}:{lineno}: pitch must be an integer")
            value = rec.get("value")
            if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
                raise DataFormatError(f"{path}:{lineno}: value must be an integer or null")
            try:
                notes.append(NoteEvent(onset, offset, pitch, value))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return tuple(notes)


def write_notes_jsonl(path: str, notes: Iterable[NoteEvent]) -> None:
    """Write a note sequence as JSONL (one note object per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for note in notes:
            rec = {
                "onset": note.onset,
                "offset": note.offset,
                "pitch": note.pitch,
                "value": note.value,
            }
            fh.write(json.dumps(rec) + "\n")

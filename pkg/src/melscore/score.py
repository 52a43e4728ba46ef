"""Time-aligned score assembly: rests, barlines, and notation output.

A valued note sequence is laid onto a sixteenth-note beat axis: the first
note starts the first measure, gaps between notes become rests sized by the
neighboring notes' implied sixteenth duration, and barlines fall every 16
sixteenths (fixed 4/4). The result serializes to MusicXML and to a JSON
form that keeps each note's source onset/offset seconds.
"""

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Sequence, Union

from .notes import DataFormatError, NoteEvent, round_half_away, validate_sequence

SIXTEENTHS_PER_MEASURE = 16


@dataclass(frozen=True)
class ScoreNote:
    """A pitched symbol: beat coordinates plus source times in seconds."""

    pitch: int
    beat_position: int
    value: int
    onset: float
    offset: float

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside MIDI range")
        if self.beat_position < 0:
            raise ValueError("beat_position must be non-negative")
        if self.value < 1:
            raise ValueError("note value must be at least 1")
        if not self.onset < self.offset:
            raise ValueError("onset must precede offset")


@dataclass(frozen=True)
class ScoreRest:
    beat_position: int
    value: int

    def __post_init__(self) -> None:
        if self.beat_position < 0:
            raise ValueError("beat_position must be non-negative")
        if self.value < 1:
            raise ValueError("rest value must be at least 1")


@dataclass(frozen=True)
class Barline:
    beat_position: int

    def __post_init__(self) -> None:
        if self.beat_position <= 0 or self.beat_position % SIXTEENTHS_PER_MEASURE:
            raise ValueError(
                f"barline at {self.beat_position} is not a positive multiple "
                f"of {SIXTEENTHS_PER_MEASURE}"
            )


ScoreSymbol = Union[ScoreNote, ScoreRest, Barline]


@dataclass(frozen=True)
class TimeAlignedScore:
    """Ordered score symbols in 4/4, one unit = one sixteenth note.

    Non-barline symbols tile the beat axis without gaps, and the total
    length is a whole number of measures.
    """

    symbols: tuple[ScoreSymbol, ...]

    def __post_init__(self) -> None:
        pos = 0
        seen_barlines: set[int] = set()
        for sym in self.symbols:
            if isinstance(sym, Barline):
                if sym.beat_position in seen_barlines:
                    raise ValueError(f"duplicate barline at {sym.beat_position}")
                seen_barlines.add(sym.beat_position)
                continue
            if sym.beat_position != pos:
                raise ValueError(
                    f"symbol at beat {sym.beat_position} does not tile "
                    f"(expected {pos})"
                )
            pos += sym.value
        if pos % SIXTEENTHS_PER_MEASURE:
            raise ValueError("total duration is not a whole number of measures")

    @property
    def total_sixteenths(self) -> int:
        return sum(
            s.value for s in self.symbols if not isinstance(s, Barline)
        )

    def notes(self) -> tuple[ScoreNote, ...]:
        return tuple(s for s in self.symbols if isinstance(s, ScoreNote))


def build_score(notes: Sequence[NoteEvent]) -> TimeAlignedScore:
    """Lay a valued, monophonic note sequence onto the beat axis.

    The first note starts at beat 0. A gap of dt seconds between notes
    becomes a rest of round(dt / d_avg) sixteenths — d_avg averaging the
    sixteenth duration implied by the two neighboring notes — omitted when
    it rounds to zero. The final measure is completed with a rest, and
    barlines are placed at every measure boundary.
    """
    if not notes:
        raise ValueError("cannot build a score from an empty sequence")
    problems = validate_sequence(notes)
    if problems:
        raise ValueError("; ".join(problems))
    for i, n in enumerate(notes):
        if n.value is None:
            raise ValueError(f"note {i} is missing a value")

    body: list[ScoreSymbol] = []
    beat = 0
    prev: NoteEvent | None = None
    for note in notes:
        if prev is not None:
            gap = note.onset - prev.offset
            if gap > 0:
                d_avg = 0.5 * (
                    (prev.offset - prev.onset) / prev.value
                    + (note.offset - note.onset) / note.value
                )
                rest_value = int(round_half_away(gap / d_avg))
                if rest_value > 0:
                    body.append(ScoreRest(beat, rest_value))
                    beat += rest_value
        body.append(ScoreNote(note.pitch, beat, note.value, note.onset, note.offset))
        beat += note.value
        prev = note
    leftover = beat % SIXTEENTHS_PER_MEASURE
    if leftover:
        fill = SIXTEENTHS_PER_MEASURE - leftover
        body.append(ScoreRest(beat, fill))
        beat += fill

    merged: list[tuple[tuple[int, int], ScoreSymbol]] = [
        ((sym.beat_position, 1), sym) for sym in body
    ]
    merged.extend(
        ((p, 0), Barline(p))
        for p in range(SIXTEENTHS_PER_MEASURE, beat + 1, SIXTEENTHS_PER_MEASURE)
    )
    merged.sort(key=lambda item: item[0])
    return TimeAlignedScore(tuple(sym for _, sym in merged))


def to_timed_json(score: TimeAlignedScore) -> str:
    """Serialize a score to JSON, keeping notes' source seconds."""
    symbols = []
    for sym in score.symbols:
        if isinstance(sym, ScoreNote):
            symbols.append(
                {
                    "kind": "note",
                    "beat": sym.beat_position,
                    "value": sym.value,
                    "pitch": sym.pitch,
                    "onset": sym.onset,
                    "offset": sym.offset,
                }
            )
        elif isinstance(sym, ScoreRest):
            symbols.append({"kind": "rest", "beat": sym.beat_position, "value": sym.value})
        else:
            symbols.append({"kind": "barline", "beat": sym.beat_position})
    document = {"meter": "4/4", "unit": "sixteenth", "symbols": symbols}
    return json.dumps(document, indent=2) + "\n"


def parse_timed_json(text: str) -> TimeAlignedScore:
    """Inverse of to_timed_json; raises DataFormatError on malformed input."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise DataFormatError("score document must be a JSON object")
    if document.get("meter") != "4/4" or document.get("unit") != "sixteenth":
        raise DataFormatError("score document must declare meter 4/4 in sixteenths")
    raw_symbols = document.get("symbols")
    if not isinstance(raw_symbols, list):
        raise DataFormatError("score document must carry a symbol array")
    symbols: list[ScoreSymbol] = []
    for i, raw in enumerate(raw_symbols):
        if not isinstance(raw, dict):
            raise DataFormatError(f"symbol {i} is not an object")
        kind = raw.get("kind")
        try:
            if kind == "note":
                symbols.append(
                    ScoreNote(
                        pitch=raw["pitch"],
                        beat_position=raw["beat"],
                        value=raw["value"],
                        onset=raw["onset"],
                        offset=raw["offset"],
                    )
                )
            elif kind == "rest":
                symbols.append(ScoreRest(beat_position=raw["beat"], value=raw["value"]))
            elif kind == "barline":
                symbols.append(Barline(beat_position=raw["beat"]))
            else:
                raise DataFormatError(f"symbol {i} has unknown kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataFormatError):
                raise
            raise DataFormatError(f"symbol {i} is malformed: {exc}") from exc
    try:
        return TimeAlignedScore(tuple(symbols))
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc


_STEP_OF_PC = ("C", "C", "D", "D", "E", "F", "F", "G", "G", "A", "A", "B")
_ALTER_OF_PC = (0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0)

_TYPE_OF_DURATION = {
    1: ("16th", 0),
    2: ("eighth", 0),
    3: ("eighth", 1),
    4: ("quarter", 0),
    6: ("quarter", 1),
    8: ("half", 0),
    12: ("half", 1),
    16: ("whole", 0),
}

_DOCTYPE = (
    '<!DOCTYPE score-partwise PUBLIC "-//Recordare//DTD MusicXML 3.1 '
    'Partwise//EN" "http://www.musicxml.org/dtds/partwise.dtd">'
)


def _split_at_measures(start: int, value: int) -> list[tuple[int, int]]:
    """Cut (start, value) into (position, length) pieces at measure lines."""
    pieces = []
    pos, remaining = start, value
    while remaining > 0:
        boundary = (pos // SIXTEENTHS_PER_MEASURE + 1) * SIXTEENTHS_PER_MEASURE
        chunk = min(remaining, boundary - pos)
        pieces.append((pos, chunk))
        pos += chunk
        remaining -= chunk
    return pieces


def _append_pitch(note_el: ET.Element, pitch: int) -> None:
    pc = pitch % 12
    pitch_el = ET.SubElement(note_el, "pitch")
    ET.SubElement(pitch_el, "step").text = _STEP_OF_PC[pc]
    if _ALTER_OF_PC[pc]:
        ET.SubElement(pitch_el, "alter").text = str(_ALTER_OF_PC[pc])
    ET.SubElement(pitch_el, "octave").text = str(pitch // 12 - 1)


def _append_note_piece(
    measure_el: ET.Element,
    sym: ScoreSymbol,
    position: int,
    duration: int,
    tie_start: bool,
    tie_stop: bool,
) -> None:
    note_el = ET.SubElement(measure_el, "note")
    is_rest = isinstance(sym, ScoreRest)
    measure_rest = (
        is_rest
        and duration == SIXTEENTHS_PER_MEASURE
        and position % SIXTEENTHS_PER_MEASURE == 0
    )
    if is_rest:
        rest_el = ET.SubElement(note_el, "rest")
        if measure_rest:
            rest_el.set("measure", "yes")
    else:
        _append_pitch(note_el, sym.pitch)
    ET.SubElement(note_el, "duration").text = str(duration)
    if tie_stop:
        ET.SubElement(note_el, "tie", type="stop")
    if tie_start:
        ET.SubElement(note_el, "tie", type="start")
    ET.SubElement(note_el, "voice").text = "1"
    if not measure_rest:
        named = _TYPE_OF_DURATION.get(duration)
        if named is not None:
            type_name, dots = named
            ET.SubElement(note_el, "type").text = type_name
            for _ in range(dots):
                ET.SubElement(note_el, "dot")
    if tie_start or tie_stop:
        notations = ET.SubElement(note_el, "notations")
        if tie_stop:
            ET.SubElement(notations, "tied", type="stop")
        if tie_start:
            ET.SubElement(notations, "tied", type="start")


def to_musicxml(score: TimeAlignedScore, part_name: str = "melody") -> str:
    """Emit a single-part MusicXML 3.1 partwise document.

    One division per sixteenth (divisions=4), sharps for accidentals, and
    notes crossing a barline split into tied pieces. Output is
    byte-deterministic for a given score.
    """
    total = score.total_sixteenths
    n_measures = max(1, total // SIXTEENTHS_PER_MEASURE)

    root = ET.Element("score-partwise", version="3.1")
    part_list = ET.SubElement(root, "part-list")
    score_part = ET.SubElement(part_list, "score-part", id="P1")
    ET.SubElement(score_part, "part-name").text = part_name
    part = ET.SubElement(root, "part", id="P1")
    measures = [
        ET.SubElement(part, "measure", number=str(k + 1)) for k in range(n_measures)
    ]

    attributes = ET.Element("attributes")
    ET.SubElement(attributes, "divisions").text = "4"
    time_el = ET.SubElement(attributes, "time")
    ET.SubElement(time_el, "beats").text = "4"
    ET.SubElement(time_el, "beat-type").text = "4"
    clef = ET.SubElement(attributes, "clef")
    ET.SubElement(clef, "sign").text = "G"
    ET.SubElement(clef, "line").text = "2"
    measures[0].insert(0, attributes)

    for sym in score.symbols:
        if isinstance(sym, Barline):
            continue
        pieces = _split_at_measures(sym.beat_position, sym.value)
        for i, (pos, chunk) in enumerate(pieces):
            first, last = i == 0, i == len(pieces) - 1
            tie = isinstance(sym, ScoreNote) and len(pieces) > 1
            _append_note_piece(
                measures[pos // SIXTEENTHS_PER_MEASURE],
                sym,
                pos,
                chunk,
                tie_start=tie and not last,
                tie_stop=tie and not first,
            )

    if total == 0:
        note_el = ET.SubElement(measures[0], "note")
        ET.SubElement(note_el, "rest", measure="yes")
        ET.SubElement(note_el, "duration").text = str(SIXTEENTHS_PER_MEASURE)
        ET.SubElement(note_el, "voice").text = "1"

    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n' + _DOCTYPE + "\n" + body + "\n"
    )


def validate_musicxml(text: str) -> list[str]:
    """Structural checks on an emitted document; empty list means clean.

    Verifies the partwise skeleton, that measure durations sum to a full
    measure, and that every tie stop follows a matching tie start.
    """
    problems: list[str] = []
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        return [f"not well-formed XML: {exc}"]
    if root.tag != "score-partwise":
        return [f"root element is {root.tag!r}, expected score-partwise"]
    part = root.find("part")
    if part is None:
        return ["no part element"]
    listed = {sp.get("id") for sp in root.iter("score-part")}
    if part.get("id") not in listed:
        problems.append(f"part id {part.get('id')!r} missing from part-list")
    open_tie = False
    for m_index, measure in enumerate(part.findall("measure"), start=1):
        if measure.get("number") != str(m_index):
            problems.append(f"measure {m_index} numbered {measure.get('number')!r}")
        total = 0
        for note in measure.findall("note"):
            duration = note.findtext("duration")
            if duration is None:
                problems.append(f"measure {m_index}: note without duration")
                continue
            total += int(duration)
            ties = {t.get("type") for t in note.findall("tie")}
            if "stop" in ties:
                if not open_tie:
                    problems.append(f"measure {m_index}: tie stop without start")
                open_tie = False
            if "start" in ties:
                if open_tie:
                    problems.append(f"measure {m_index}: nested tie start")
                open_tie = True
        if total != SIXTEENTHS_PER_MEASURE:
            problems.append(
                f"measure {m_index} holds {total} divisions, expected "
                f"{SIXTEENTHS_PER_MEASURE}"
            )
    if open_tie:
        problems.append("unterminated tie at end of part")
    return problems

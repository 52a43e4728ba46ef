"""Slicing note sequences into analysis windows and converting them to tokens.

Per-window serialization: an optional leading (Time, Value) pair for a note
begun before the window, each complete note as (Time, Pitch, Time, Value),
and an optional trailing (Time, Pitch) pair for a note ending after the
window, all bracketed by SOS/EOS. Time tokens are window-local frame indices.

A note that does not fit its window splits into an onset fragment in the
window holding its onset and an offset fragment in the window holding its
offset; an offset landing exactly on a window boundary belongs to the
earlier window.
"""

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .notes import (
    MIDI_MAX,
    MIDI_MIN,
    DataFormatError,
    NoteEvent,
    NoteSequence,
    SegmentWindow,
    round_half_away,
)
from .vocab import Token, TokenType, Vocabulary

# absorbs float noise in window arithmetic, well below one frame
_EPS = 1e-6


def seconds_to_frame(seconds: float, frame_period: float) -> int:
    """Quantize seconds to a frame index, rounding half away from zero."""
    return int(round_half_away(seconds / frame_period))


@dataclass(frozen=True)
class SegmentContent:
    """What one analysis window sees of a melody, in absolute seconds.

    leading:  (offset, value) of a note begun before the window, if any.
    notes:    notes lying wholly inside the window, in onset order.
    trailing: (onset, pitch) of a note ending after the window, if any.
    """

    window: SegmentWindow
    leading: tuple[float, int | None] | None = None
    notes: NoteSequence = ()
    trailing: tuple[float, int] | None = None

    def is_empty(self) -> bool:
        return self.leading is None and not self.notes and self.trailing is None


@dataclass(frozen=True)
class SegmentTokens:
    """A window paired with its encoded token ids."""

    window: SegmentWindow
    ids: tuple[int, ...]


@dataclass(frozen=True)
class SegmentDecode:
    """Result of reading one window's tokens back into events (absolute seconds)."""

    leading: tuple[float, int] | None
    notes: NoteSequence
    trailing: tuple[float, int] | None
    invalid_count: int


def window_content(notes: Sequence[NoteEvent], window: SegmentWindow) -> SegmentContent:
    """Collect the events a single window sees of a melody.

    Complete notes must start inside [start, end) and end by the window end;
    a note begun earlier that ends inside (start, end] contributes only its
    offset (the leading fragment); a note starting inside but ending later
    contributes only its onset (the trailing fragment). A note spanning the
    whole window contributes nothing, since neither endpoint is visible.
    """
    s, e = window.start, window.end
    leading = None
    inside: list[NoteEvent] = []
    trailing = None
    for note in notes:
        if s - _EPS <= note.onset < e - _EPS:
            if note.offset <= e + _EPS:
                inside.append(note)
            else:
                trailing = (note.onset, note.pitch)
        elif note.onset < s - _EPS and s + _EPS < note.offset <= e + _EPS:
            leading = (note.offset, note.value)
    return SegmentContent(window, leading, tuple(inside), trailing)


def slice_segments(
    notes: Sequence[NoteEvent],
    segment_seconds: float,
    hop_seconds: float,
    duration: float | None = None,
) -> list[SegmentContent]:
    """Split a melody into analysis windows starting at 0, hop, 2*hop, ...

    Each note is assigned to the window holding its onset; if its offset does
    not fit there it splits into onset/offset fragments as described in the
    module docstring. Enough windows are produced to cover every note (and
    `duration`, when given), empty windows included.
    """
    if segment_seconds <= 0 or hop_seconds <= 0:
        raise ValueError("segment and hop lengths must be positive")
    if hop_seconds > segment_seconds + _EPS:
        raise ValueError(
            f"hop {hop_seconds} must not exceed the window length {segment_seconds}"
        )
    extent = max((n.offset for n in notes), default=0.0)
    if duration is not None:
        extent = max(extent, duration)
    n_windows = max(
        1, math.ceil((extent - segment_seconds) / hop_seconds - _EPS) + 1
    )

    leadings: dict[int, tuple[float, int | None]] = {}
    trailings: dict[int, tuple[float, int]] = {}
    complete: dict[int, list[NoteEvent]] = {}
    for note in notes:
        k1 = min(int(math.floor(note.onset / hop_seconds + _EPS)), n_windows - 1)
        start1 = k1 * hop_seconds
        if note.offset <= start1 + segment_seconds + _EPS:
            complete.setdefault(k1, []).append(note)
        else:
            trailings[k1] = (note.onset, note.pitch)
            # ceil-minus-one sends an offset exactly on a hop boundary to the
            # earlier window
            k2 = math.ceil(note.offset / hop_seconds - _EPS) - 1
            k2 = min(max(k2, 0), n_windows - 1)
            leadings[k2] = (note.offset, note.value)

    out = []
    for k in range(n_windows):
        window = SegmentWindow(k * hop_seconds, segment_seconds)
        out.append(
            SegmentContent(
                window,
                leadings.get(k),
                tuple(complete.get(k, ())),
                trailings.get(k),
            )
        )
    return out


def crop_labels(
    notes: Sequence[NoteEvent], start: float, length: float
) -> SegmentContent:
    """Window content for a crop at an arbitrary start, rebased to local time.

    Matches the single-window case of slice_segments: a crop boundary through
    a note keeps only the endpoint lying inside. Useful for random-crop
    augmentation of training labels.
    """
    content = window_content(notes, SegmentWindow(start, length))
    local = SegmentWindow(0.0, length)
    leading = None
    if content.leading is not None:
        leading = (content.leading[0] - start, content.leading[1])
    trailing = None
    if content.trailing is not None:
        trailing = (content.trailing[0] - start, content.trailing[1])
    shifted = tuple(
        replace(n, onset=n.onset - start, offset=n.offset - start)
        for n in content.notes
    )
    return SegmentContent(local, leading, shifted, trailing)


def shift_pitch_labels(notes: Sequence[NoteEvent], semitones: int) -> NoteSequence:
    """Transpose every pitch by a signed number of semitones.

    Times and values are untouched. Raises ValueError if any shifted pitch
    leaves the MIDI range.
    """
    shifted = []
    for i, note in enumerate(notes):
        pitch = note.pitch + semitones
        if not MIDI_MIN <= pitch <= MIDI_MAX:
            raise ValueError(
                f"note {i}: pitch {note.pitch} shifted by {semitones} leaves"
                f" the MIDI range"
            )
        shifted.append(replace(note, pitch=pitch))
    return tuple(shifted)


def encode_segment(content: SegmentContent, vocab: Vocabulary) -> SegmentTokens:
    """Serialize one window's events into token ids.

    All event times must lie inside the window (offsets may land exactly on
    the window end) and all notes must carry values.
    """
    window = content.window

    def frame_of(t: float, what: str) -> int:
        local = t - window.start
        if local < -_EPS or local > window.length + _EPS:
            raise ValueError(
                f"{what} at {t} s lies outside window"
                f" [{window.start}, {window.end}]"
            )
        frame = seconds_to_frame(local, vocab.frame_period)
        return min(max(frame, 0), vocab.n_frames - 1)

    ids = [vocab.SOS]
    if content.leading is not None:
        t, value = content.leading
        if value is None:
            raise ValueError("leading fragment has no note value")
        ids.append(vocab.time_id(frame_of(t, "leading offset")))
        ids.append(vocab.value_id(value))
    for note in content.notes:
        if note.value is None:
            raise ValueError(
                f"note at {note.onset} s has no value; assign values before encoding"
            )
        ids.append(vocab.time_id(frame_of(note.onset, "note onset")))
        ids.append(vocab.pitch_id(note.pitch))
        ids.append(vocab.time_id(frame_of(note.offset, "note offset")))
        ids.append(vocab.value_id(note.value))
    if content.trailing is not None:
        t, pitch = content.trailing
        ids.append(vocab.time_id(frame_of(t, "trailing onset")))
        ids.append(vocab.pitch_id(pitch))
    ids.append(vocab.EOS)
    return SegmentTokens(window, tuple(ids))


def decode_tokens(
    ids: Sequence[int], window: SegmentWindow, vocab: Vocabulary
) -> SegmentDecode:
    """Total decoder from raw token ids back to window events.

    Walks (Time, Pitch|Value) pairs left to right: (Time, Pitch) opens a
    pending onset, replacing (and invalidating) any previously pending one;
    (Time, Value) closes the pending onset into a note, or, when nothing is
    pending and no note has been produced yet, becomes the leading fragment.
    A close at or before its onset frame drops both halves as one invalid. A
    pending onset left at EOS becomes the trailing fragment. Everything else
    (stray or unknown tokens, ill-placed pairs) counts invalid and is
    skipped, so any id sequence decodes.
    """
    body: list[int] = []
    for tok in ids:
        if tok == vocab.EOS:
            break
        body.append(tok)
    # the customary SOS prefix is not content
    if body and body[0] == vocab.SOS:
        body = body[1:]

    def kind(tok: int) -> Token | None:
        try:
            return vocab.kind_of(tok)
        except ValueError:
            return None

    t0 = window.start
    dt = vocab.frame_period
    leading: tuple[float, int] | None = None
    notes: list[NoteEvent] = []
    pending: tuple[int, int] | None = None  # (frame, pitch)
    invalid = 0
    i = 0
    while i < len(body):
        head = kind(body[i])
        follow = kind(body[i + 1]) if i + 1 < len(body) else None
        if head is not None and head.type is TokenType.TIME and follow is not None:
            if follow.type is TokenType.PITCH:
                if pending is not None:
                    invalid += 1
                pending = (head.index, follow.index)
                i += 2
                continue
            if follow.type is TokenType.VALUE:
                if pending is not None:
                    on_frame, pitch = pending
                    if head.index > on_frame:
                        notes.append(
                            NoteEvent(
                                t0 + on_frame * dt,
                                t0 + head.index * dt,
                                pitch,
                                follow.index,
                            )
                        )
                    else:
                        invalid += 1
                    pending = None
                elif leading is None and not notes:
                    leading = (t0 + head.index * dt, follow.index)
                else:
                    invalid += 1
                i += 2
                continue
        invalid += 1
        i += 1

    trailing = None
    if pending is not None:
        trailing = (t0 + pending[0] * dt, pending[1])
    return SegmentDecode(leading, tuple(notes), trailing, invalid)


def segment_token_errors(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    """Structural check for an encoded segment: SOS/EOS bracketing, strict
    Time/(Pitch or Value) alternation, and non-decreasing time frames.

    Returns one message per violation; used by tests and input validation.
    """
    problems = []
    if not ids or ids[0] != vocab.SOS:
        problems.append("sequence must start with SOS")
        return problems
    if vocab.EOS not in ids:
        problems.append("sequence must contain EOS")
        return problems
    body = list(ids[1 : list(ids).index(vocab.EOS)])
    for extra in ids[list(ids).index(vocab.EOS) + 1 :]:
        if extra != vocab.PAD:
            problems.append("only PAD may follow EOS")
            break
    if len(body) % 2 != 0:
        problems.append("tokens between SOS and EOS must form (Time, ...) pairs")
    last_frame = 0
    for pos, tok in enumerate(body):
        try:
            token = vocab.kind_of(tok)
        except ValueError:
            problems.append(f"position {pos}: unknown token id {tok}")
            continue
        if pos % 2 == 0:
            if token.type is not TokenType.TIME:
                problems.append(f"position {pos}: expected a Time token, got {token.type.value}")
            else:
                if token.index < last_frame:
                    problems.append(
                        f"position {pos}: time frame {token.index} decreases below {last_frame}"
                    )
                last_frame = token.index
        elif token.type not in (TokenType.PITCH, TokenType.VALUE):
            problems.append(
                f"position {pos}: expected a Pitch or Value token, got {token.type.value}"
            )
    return problems


_SPECIAL_NAMES = {"SOS": TokenType.SOS, "EOS": TokenType.EOS, "PAD": TokenType.PAD}


def tokens_to_text(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Render token ids as the whitespace text form: SOS T50 P60 T100 V2 EOS."""
    parts = []
    for tok in ids:
        token = vocab.kind_of(tok)
        if token.type is TokenType.TIME:
            parts.append(f"T{token.index}")
        elif token.type is TokenType.PITCH:
            parts.append(f"P{token.index}")
        elif token.type is TokenType.VALUE:
            parts.append(f"V{token.index}")
        else:
            parts.append(token.type.value.upper())
    return " ".join(parts)


def tokens_from_text(text: str, vocab: Vocabulary) -> tuple[int, ...]:
    """Parse the whitespace token text form back to ids.

    Raises DataFormatError for unknown symbols or out-of-range indices.
    """
    ids = []
    for word in text.split():
        if word in _SPECIAL_NAMES:
            ids.append(vocab.token_of(Token(_SPECIAL_NAMES[word])))
            continue
        prefix, rest = word[:1], word[1:]
        kind = {"T": TokenType.TIME, "P": TokenType.PITCH, "V": TokenType.VALUE}.get(prefix)
        if kind is None or not rest.lstrip("-").isdigit():
            raise DataFormatError(f"unknown token symbol {word!r}")
        try:
            ids.append(vocab.token_of(Token(kind, int(rest))))
        except ValueError as exc:
            raise DataFormatError(f"token symbol {word!r}: {exc}") from exc
    return tuple(ids)

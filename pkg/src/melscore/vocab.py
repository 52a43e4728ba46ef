"""Token vocabulary for note sequence modeling.

Token id layout with the default 5.12 s segment and 10 ms frames:

    id 0         PAD
    id 1         SOS
    id 2         EOS
    ids 3..515   Time(frame), frame 0..512
    ids 516..643 Pitch(midi), midi 0..127
    ids 644..675 Value(units), units 1..32

676 symbols in total. Time frames run from 0 to the segment length inclusive
(one more frame than hops fit in the segment), so an offset landing exactly
on the right window edge stays encodable.
"""

import enum
from dataclasses import dataclass
from typing import ClassVar

from .notes import MIDI_MAX, MIDI_MIN, VALUE_MAX as NOTE_VALUE_MAX


class TokenType(enum.Enum):
    PAD = "pad"
    SOS = "sos"
    EOS = "eos"
    TIME = "time"
    PITCH = "pitch"
    VALUE = "value"


@dataclass(frozen=True)
class Token:
    """A vocabulary symbol: its type plus the payload index.

    The index is the frame number for TIME, the MIDI number for PITCH, the
    sixteenth count for VALUE, and None for the special symbols.
    """

    type: TokenType
    index: int | None = None


N_PITCHES = MIDI_MAX - MIDI_MIN + 1
N_SPECIALS = 3


@dataclass(frozen=True)
class Vocabulary:
    """Token id layout for a fixed segment length, frame period and value cap."""

    segment_seconds: float = 5.12
    frame_period: float = 0.01
    value_max: int = 32

    PAD: ClassVar[int] = 0
    SOS: ClassVar[int] = 1
    EOS: ClassVar[int] = 2

    def __post_init__(self) -> None:
        if self.segment_seconds <= 0 or self.frame_period <= 0:
            raise ValueError("segment length and frame period must be positive")
        frames = self.segment_seconds / self.frame_period
        if abs(frames - round(frames)) > 1e-6:
            raise ValueError(
                f"segment length {self.segment_seconds} is not a whole number of"
                f" {self.frame_period} s frames"
            )
        if not 1 <= self.value_max <= NOTE_VALUE_MAX:
            raise ValueError(f"value_max {self.value_max} outside 1..{NOTE_VALUE_MAX}")

    @property
    def n_frames(self) -> int:
        # frames 0..segment end inclusive
        return round(self.segment_seconds / self.frame_period) + 1

    @property
    def time_base(self) -> int:
        return N_SPECIALS

    @property
    def pitch_base(self) -> int:
        return N_SPECIALS + self.n_frames

    @property
    def value_base(self) -> int:
        return self.pitch_base + N_PITCHES

    @property
    def size(self) -> int:
        return self.value_base + self.value_max

    def time_id(self, frame: int) -> int:
        if not 0 <= frame < self.n_frames:
            raise ValueError(f"time frame {frame} outside 0..{self.n_frames - 1}")
        return self.time_base + frame

    def pitch_id(self, midi: int) -> int:
        if not MIDI_MIN <= midi <= MIDI_MAX:
            raise ValueError(f"pitch {midi} outside MIDI range {MIDI_MIN}..{MIDI_MAX}")
        return self.pitch_base + midi - MIDI_MIN

    def value_id(self, units: int) -> int:
        if not 1 <= units <= self.value_max:
            raise ValueError(f"note value {units} outside 1..{self.value_max}")
        return self.value_base + units - 1

    def token_of(self, token: Token) -> int:
        """Map a Token to its integer id (inverse of kind_of)."""
        if token.type is TokenType.PAD:
            return self.PAD
        if token.type is TokenType.SOS:
            return self.SOS
        if token.type is TokenType.EOS:
            return self.EOS
        if token.index is None:
            raise ValueError(f"{token.type.value} token requires an index")
        if token.type is TokenType.TIME:
            return self.time_id(token.index)
        if token.type is TokenType.PITCH:
            return self.pitch_id(token.index)
        return self.value_id(token.index)

    def kind_of(self, token_id: int) -> Token:
        """Map an integer id back to its Token (inverse of token_of)."""
        if token_id == self.PAD:
            return Token(TokenType.PAD)
        if token_id == self.SOS:
            return Token(TokenType.SOS)
        if token_id == self.EOS:
            return Token(TokenType.EOS)
        if self.time_base <= token_id < self.pitch_base:
            return Token(TokenType.TIME, token_id - self.time_base)
        if self.pitch_base <= token_id < self.value_base:
            return Token(TokenType.PITCH, token_id - self.pitch_base + MIDI_MIN)
        if self.value_base <= token_id < self.size:
            return Token(TokenType.VALUE, token_id - self.value_base + 1)
        raise ValueError(f"token id {token_id} outside vocabulary of size {self.size}")

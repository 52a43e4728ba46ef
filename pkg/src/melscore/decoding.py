"""Grammar-constrained greedy decoding over the note token vocabulary.

The decoder consumes raw next-token scores from a pluggable provider and
picks the argmax over the legal subset each step. Legality enforces the
serialization grammar, so whatever the provider does, the output detokenizes
cleanly: tokens strictly alternate Time and Pitch/Value, time frames never
decrease, an opened (Time, Pitch) onset can only be continued by its offset
Time (strictly after the onset frame) and closing Value, and a (Time, Value)
pair may appear only in the leading-fragment position. EOS is legal exactly
where a Time token is legal, which lets a pending onset be truncated into a
trailing fragment but never strands half a pair.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .codec import (
    SegmentContent,
    decode_tokens,
    encode_segment,
    window_content,
)
from .notes import NoteEvent, NoteSequence, SegmentWindow
from .vocab import TokenType, Vocabulary

_EPS = 1e-6


class ProviderProtocolError(RuntimeError):
    """A score provider broke the scoring contract."""


@runtime_checkable
class ScoreProvider(Protocol):
    """Scores the next token given segment features and the emitted prefix.

    Must return one finite score per vocabulary entry; scores are compared
    raw (argmax), so any monotone transform of probabilities works.
    """

    def __call__(self, features, prefix: Sequence[int]) -> np.ndarray: ...


@runtime_checkable
class FeatureSource(Protocol):
    """Per-recording features that can be sliced into analysis windows."""

    @property
    def duration(self) -> float: ...

    def segment(self, window: SegmentWindow): ...


@dataclass
class DecoderState:
    """Incremental record of the emitted prefix, enough to compute the mask."""

    emitted: list[int] = field(default_factory=list)
    last_time_frame: int = 0
    last_type: TokenType | None = None  # most recent non-special token type
    pending_onset_frame: int | None = None  # open (Time, Pitch) awaiting offset
    saw_pair: bool = False  # a complete (Time, x) pair has been consumed
    finished: bool = False

    @property
    def pending_open(self) -> bool:
        return self.pending_onset_frame is not None

    def advance(self, token_id: int, vocab: Vocabulary) -> None:
        token = vocab.kind_of(token_id)
        self.emitted.append(token_id)
        if token.type is TokenType.EOS:
            self.finished = True
        elif token.type is TokenType.TIME:
            self.last_time_frame = token.index
            self.last_type = TokenType.TIME
        elif token.type is TokenType.PITCH:
            self.pending_onset_frame = self.last_time_frame
            self.last_type = TokenType.PITCH
        elif token.type is TokenType.VALUE:
            self.pending_onset_frame = None
            self.saw_pair = True
            self.last_type = TokenType.VALUE
        # SOS/PAD carry no state; the decoder never emits them


def legal_mask(state: DecoderState, vocab: Vocabulary) -> np.ndarray:
    """Boolean legality over the vocabulary for the next emission.

    PAD and SOS are never legal. After EOS nothing is. At least one token is
    legal in every reachable decoding state (EOS backstops the Time
    positions), so constrained decoding cannot deadlock.
    """
    mask = np.zeros(vocab.size, dtype=bool)
    if state.finished:
        return mask
    if state.last_type is TokenType.TIME:
        if state.pending_open:
            # the offset Time is down; only the closing Value may follow
            mask[vocab.value_base : vocab.value_base + vocab.value_max] = True
        else:
            mask[vocab.pitch_base : vocab.value_base] = True
            if not state.saw_pair:
                # only the first pair of a segment may be a leading fragment
                mask[vocab.value_base : vocab.value_base + vocab.value_max] = True
        return mask
    # a Time token (or the end of the sequence) comes next
    lowest = state.last_time_frame
    if state.last_type is TokenType.PITCH and state.pending_open:
        # an offset strictly after its onset keeps every note non-degenerate
        lowest = state.pending_onset_frame + 1
    if lowest < vocab.n_frames:
        mask[vocab.time_base + lowest : vocab.time_base + vocab.n_frames] = True
    mask[vocab.EOS] = True
    return mask


def decode(
    provider: ScoreProvider,
    features,
    vocab: Vocabulary,
    max_len: int = 512,
    forced: Sequence[int] = (),
) -> list[int]:
    """Greedy constrained decoding: argmax over masked raw scores each step.

    forced: token ids emitted verbatim before free generation begins; the
    stitching layer uses this to replay already-final events. Forced tokens
    must be legal under the mask, which holds for encode_segment output.

    Returns the token sequence including the implicit leading SOS. At most
    max_len tokens are generated after it; when the budget's final slot is
    reached in a state where EOS is legal, EOS is emitted so that truncation
    never strands a dangling Time token.
    """
    if len(forced) > max_len:
        raise ValueError(
            f"forced prefix of {len(forced)} tokens exceeds max_len {max_len}"
        )
    state = DecoderState()
    out = [vocab.SOS]
    for tok in forced:
        if not legal_mask(state, vocab)[tok]:
            raise ValueError(
                f"forced token {tok} is not legal at position {len(out)}"
            )
        state.advance(tok, vocab)
        out.append(tok)
        if state.finished:
            return out
    while len(out) - 1 < max_len and not state.finished:
        mask = legal_mask(state, vocab)
        if len(out) - 1 == max_len - 1 and mask[vocab.EOS]:
            choice = vocab.EOS
        else:
            scores = np.asarray(provider(features, tuple(out)), dtype=float)
            if scores.shape != (vocab.size,):
                raise ProviderProtocolError(
                    f"provider returned shape {scores.shape}, expected ({vocab.size},)"
                )
            if not np.all(np.isfinite(scores)):
                raise ProviderProtocolError("provider returned non-finite scores")
            masked = np.where(mask, scores, -np.inf)
            choice = int(np.argmax(masked))
        state.advance(choice, vocab)
        out.append(choice)
    return out


def oracle_provider(target: Sequence[int], vocab: Vocabulary) -> ScoreProvider:
    """Provider that replays a fixed token sequence, one step at a time.

    target includes the leading SOS; at prefix length i the provider scores
    target[i] one-hot (EOS once the target is exhausted).
    """
    tgt = tuple(target)

    def provide(features, prefix: Sequence[int]) -> np.ndarray:
        scores = np.zeros(vocab.size)
        idx = len(prefix)
        scores[tgt[idx] if idx < len(tgt) else vocab.EOS] = 1.0
        return scores

    return provide


@dataclass(frozen=True)
class WindowFeatures:
    """Minimal FeatureSource whose per-segment features are the windows themselves.

    Pairs with providers that derive scores from known notes rather than
    audio, e.g. notes_oracle_provider.
    """

    duration: float

    def segment(self, window: SegmentWindow) -> SegmentWindow:
        return window


def notes_oracle_provider(
    notes: Sequence[NoteEvent], vocab: Vocabulary
) -> ScoreProvider:
    """Provider replaying the encoding of a known melody for any window.

    The features argument must be the SegmentWindow itself (see
    WindowFeatures). Windows are encoded on first use and cached.
    """
    fixed = tuple(notes)
    cache: dict[tuple[float, float], tuple[int, ...]] = {}

    def provide(window: SegmentWindow, prefix: Sequence[int]) -> np.ndarray:
        key = (window.start, window.length)
        target = cache.get(key)
        if target is None:
            target = encode_segment(window_content(fixed, window), vocab).ids
            cache[key] = target
        scores = np.zeros(vocab.size)
        idx = len(prefix)
        scores[target[idx] if idx < len(target) else vocab.EOS] = 1.0
        return scores

    return provide


def notes_to_provider(
    notes: Sequence[NoteEvent], window: SegmentWindow, vocab: Vocabulary
) -> ScoreProvider:
    """Provider replaying the encoding of known notes for one fixed window."""
    content = window_content(tuple(notes), window)
    return oracle_provider(encode_segment(content, vocab).ids, vocab)


def _segment_starts(duration: float, segment_seconds: float, hop_seconds: float) -> list[float]:
    n = max(1, math.ceil((duration - segment_seconds) / hop_seconds - _EPS) + 1)
    return [k * hop_seconds for k in range(n)]


def stitch(
    provider: ScoreProvider,
    features: FeatureSource,
    vocab: Vocabulary,
    segment_seconds: float = 5.12,
    hop_seconds: float = 2.56,
    discard_seconds: float = 1.28,
    duration: float | None = None,
    max_len: int = 512,
) -> NoteSequence:
    """Transcribe a whole recording by overlapped segment decoding.

    Windows advance by hop; each non-final window's trailing discard region
    is considered unreliable and re-decoded by the next window. Events
    already finalized inside a window's head region
    [start, start + segment - hop - discard) are re-encoded and forced as the
    decoder prefix, so generation continues from a consistent state; newly
    generated events are accepted only while their onset (or fragment time)
    falls before start + segment - discard (the final window accepts to its
    end). Onset fragments left open at a window's edge pair up with a later
    window's offset fragment.
    """
    T, hop, disc = segment_seconds, hop_seconds, discard_seconds
    if hop <= 0 or T <= 0:
        raise ValueError("segment and hop lengths must be positive")
    if disc < 0 or hop + disc > T + _EPS:
        raise ValueError("need 0 <= discard and hop + discard <= segment length")
    total = float(features.duration if duration is None else duration)
    starts = _segment_starts(total, T, hop)

    finalized: list[NoteEvent] = []
    pending: tuple[float, int] | None = None  # (onset, pitch) awaiting an offset
    for k, s in enumerate(starts):
        window = SegmentWindow(s, T)
        final_window = k == len(starts) - 1
        accept_hi = window.end + _EPS if final_window else s + T - disc
        forced_end = s + (T - hop - disc)
        accept_lo = 0.0 if k == 0 else forced_end

        # events this window may replay: everything already final in its head
        known = [n for n in finalized if n.onset < forced_end - _EPS]
        head = window_content(known, window)
        forced_trailing = head.trailing
        if (
            pending is not None
            and s - _EPS <= pending[0] < forced_end - _EPS
        ):
            forced_trailing = pending
        forced_content = SegmentContent(window, head.leading, head.notes, forced_trailing)
        forced_ids = encode_segment(forced_content, vocab).ids[1:-1]

        tokens = decode(
            provider, features.segment(window), vocab, max_len=max_len, forced=forced_ids
        )
        result = decode_tokens(tokens, window, vocab)

        last_off = finalized[-1].offset if finalized else 0.0
        if result.leading is not None and forced_content.leading is None:
            off, value = result.leading
            if (
                pending is not None
                and off > pending[0] + _EPS
                and (final_window or off < accept_hi - _EPS)
                and pending[0] >= last_off - _EPS
            ):
                onset = max(pending[0], last_off)
                finalized.append(NoteEvent(onset, off, pending[1], value))
                last_off = off
                pending = None
            # an offset fragment with nothing pending is an orphan: drop it
        for note in result.notes:
            closes_pending = (
                pending is not None
                and abs(note.onset - pending[0]) <= _EPS
                and note.pitch == pending[1]
            )
            if closes_pending:
                # the forced pending onset received its generated offset
                if final_window or note.offset < accept_hi - _EPS:
                    if note.onset >= last_off - _EPS:
                        onset = max(note.onset, last_off)
                        finalized.append(
                            NoteEvent(onset, note.offset, note.pitch, note.value)
                        )
                        last_off = note.offset
                    pending = None
                # otherwise the offset fell in the discard tail: retry next window
                continue
            if note.onset < accept_lo - _EPS:
                continue  # already-final head region, nothing new here
            if not final_window and note.onset >= accept_hi - _EPS:
                continue  # unreliable tail, the next window re-decodes it
            if note.onset < last_off - _EPS:
                continue  # would overlap finalized output (inconsistent provider)
            onset = max(note.onset, last_off)
            if onset >= note.offset:
                continue
            finalized.append(NoteEvent(onset, note.offset, note.pitch, note.value))
            last_off = note.offset
        if result.trailing is not None and not final_window:
            t, pitch = result.trailing
            still_pending = (
                pending is not None
                and abs(t - pending[0]) <= _EPS
                and pitch == pending[1]
            )
            if (
                not still_pending
                and pending is None
                and accept_lo - _EPS <= t < accept_hi - _EPS
                and t >= last_off - _EPS
            ):
                pending = (max(t, last_off), pitch)
        # an onset fragment reaching the final window's end has no offset: drop
    return tuple(finalized)

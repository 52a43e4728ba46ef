"""Transcription evaluation: note matching, P/R/F, value scores, error
rates, and label calibration.

Reference and estimate note sequences are compared by maximum one-to-one
matching under configurable onset/offset/pitch/value thresholds. Symbolic
error rates compare pitch/value/note sequences by edit distance, optionally
with rests included. Label calibration grid-searches octave and time shifts
of a note sequence against an f0 track.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .notes import DataFormatError, NoteEvent
from .score import TimeAlignedScore, build_score

REST = "rest"
"""Distinguished symbol standing in for rests in pitch/note sequences."""

_TOL_EPS = 1e-9

SymbolKind = Literal["pitch", "value", "note"]


@dataclass(frozen=True)
class MatchCriteria:
    """Which note attributes must agree, and how closely, for a match."""

    use_onset: bool = True
    use_offset: bool = False
    use_pitch: bool = True
    use_value: bool = False
    onset_tolerance: float = 0.05
    offset_min_tolerance: float = 0.05
    offset_duration_ratio: float = 0.2
    pitch_tolerance_cents: float = 50.0
    value_tolerance: int = 0

    @property
    def label(self) -> str:
        parts = []
        if self.use_onset:
            parts.append("onset")
        if self.use_offset:
            parts.append("offset")
        if self.use_pitch:
            parts.append("pitch")
        if self.use_value:
            parts.append("value")
        return "+".join(parts) if parts else "none"


def standard_criteria() -> dict[str, MatchCriteria]:
    """The seven attribute combinations reported by `evaluate`."""
    combos = (
        MatchCriteria(use_onset=True, use_offset=False, use_pitch=False),
        MatchCriteria(use_onset=False, use_offset=True, use_pitch=False),
        MatchCriteria(use_onset=True, use_offset=False, use_pitch=True),
        MatchCriteria(use_onset=True, use_offset=True, use_pitch=True),
        MatchCriteria(use_onset=True, use_offset=True, use_pitch=True, use_value=True),
        MatchCriteria(use_onset=True, use_offset=True, use_pitch=False, use_value=True),
        MatchCriteria(use_onset=True, use_offset=False, use_pitch=True, use_value=True),
    )
    return {c.label: c for c in combos}


def note_pair_ok(ref: NoteEvent, est: NoteEvent, criteria: MatchCriteria) -> bool:
    """True iff `est` matches `ref` under every enabled attribute check.

    The offset tolerance widens with the reference duration:
    max(offset_min_tolerance, offset_duration_ratio * ref duration).
    Exact-boundary differences count as within tolerance.
    """
    if criteria.use_onset:
        if abs(est.onset - ref.onset) > criteria.onset_tolerance + _TOL_EPS:
            return False
    if criteria.use_offset:
        tol = max(
            criteria.offset_min_tolerance,
            criteria.offset_duration_ratio * (ref.offset - ref.onset),
        )
        if abs(est.offset - ref.offset) > tol + _TOL_EPS:
            return False
    if criteria.use_pitch:
        cents = 100.0 * abs(est.pitch - ref.pitch)
        if cents > criteria.pitch_tolerance_cents + _TOL_EPS:
            return False
    if criteria.use_value:
        if ref.value is None or est.value is None:
            raise ValueError("value comparison requires values on both notes")
        if abs(est.value - ref.value) > criteria.value_tolerance:
            return False
    return True


@dataclass(frozen=True)
class Matching:
    """One-to-one pairing of reference and estimate note indices."""

    pairs: tuple[tuple[int, int], ...]
    n_ref: int
    n_est: int

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return self.n_est - len(self.pairs)

    @property
    def fn(self) -> int:
        return self.n_ref - len(self.pairs)


def match_notes(
    ref: Sequence[NoteEvent], est: Sequence[NoteEvent], criteria: MatchCriteria
) -> Matching:
    """Maximum-cardinality one-to-one matching of compatible note pairs.

    Augmenting-path search (breadth-first) over the bipartite compatibility
    graph; the result cardinality is the true maximum regardless of input
    order.
    """
    adjacency = [
        [r for r, rn in enumerate(ref) if note_pair_ok(rn, en, criteria)]
        for en in est
    ]
    match_ref = [-1] * len(ref)
    match_est = [-1] * len(est)
    for start in range(len(est)):
        if not adjacency[start]:
            continue
        # Alternating-path BFS from the unmatched estimate node `start`;
        # parent[e] = (previous estimate node, matched ref node between them).
        parent: dict[int, tuple[int, int] | None] = {start: None}
        queue = deque([start])
        free_ref = -1
        end_est = -1
        while queue and free_ref < 0:
            e = queue.popleft()
            for r in adjacency[e]:
                owner = match_ref[r]
                if owner < 0:
                    free_ref, end_est = r, e
                    break
                if owner not in parent:
                    parent[owner] = (e, r)
                    queue.append(owner)
        if free_ref < 0:
            continue
        r, e = free_ref, end_est
        while True:
            match_ref[r], match_est[e] = e, r
            step = parent[e]
            if step is None:
                break
            e, r = step
    pairs = tuple(
        (r, match_ref[r]) for r in range(len(ref)) if match_ref[r] >= 0
    )
    return Matching(pairs, len(ref), len(est))


class PRF(NamedTuple):
    precision: float
    recall: float
    f_measure: float


def prf(matching: Matching) -> PRF:
    """Precision/recall/F from a matching; empty denominators score zero."""
    tp, fp, fn = matching.tp, matching.fp, matching.fn
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2.0 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f)


class ValueScores(NamedTuple):
    n_pairs: int
    accuracy: float
    mse: float


def value_accuracy_mse(
    ref: Sequence[NoteEvent],
    est: Sequence[NoteEvent],
    criteria: MatchCriteria,
) -> ValueScores | None:
    """Value accuracy and MSE over pairs matched without the value check.

    Returns None when nothing matches (both statistics are undefined then).
    """
    matching = match_notes(ref, est, criteria)
    if not matching.pairs:
        return None
    diffs = []
    for r, e in matching.pairs:
        rv, ev = ref[r].value, est[e].value
        if rv is None or ev is None:
            raise ValueError("value scoring requires values on both sequences")
        diffs.append(ev - rv)
    exact = sum(1 for d in diffs if d == 0)
    mse = sum(d * d for d in diffs) / len(diffs)
    return ValueScores(len(diffs), exact / len(diffs), mse)


def levenshtein(a: Sequence, b: Sequence) -> tuple[int, int, int, int]:
    """Edit distance turning `a` into `b`: (distance, subs, dels, ins).

    Unit costs. The operation split comes from one optimal alignment,
    preferring substitution, then deletion, then insertion on ties.
    """
    n, m = len(a), len(b)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (a[i - 1] != b[j - 1])
            dist[i, j] = min(sub, dist[i - 1, j] + 1, dist[i, j - 1] + 1)
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i, j]
        if i > 0 and j > 0 and here == dist[i - 1, j - 1] + (a[i - 1] != b[j - 1]):
            if a[i - 1] != b[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and here == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return int(dist[n, m]), subs, dels, ins


def error_rate(ref_symbols: Sequence, est_symbols: Sequence) -> float:
    """Percent edit-distance of the estimate from the reference.

    (substitutions + deletions + insertions) / len(reference) * 100, where
    the edits turn the estimate into the reference. Can exceed 100 when the
    estimate over-generates.
    """
    if not ref_symbols:
        raise ValueError("error rate needs a non-empty reference")
    distance, _, _, _ = levenshtein(est_symbols, ref_symbols)
    return 100.0 * distance / len(ref_symbols)


def symbol_sequence(
    source: Sequence[NoteEvent] | TimeAlignedScore,
    kind: SymbolKind,
    include_rests: bool = False,
) -> list:
    """Flatten notes or a score into comparison symbols.

    kind "pitch": MIDI ints, rests as the REST marker. kind "value": value
    ints for notes and rests alike. kind "note": (pitch, value) pairs, rests
    as (REST, value). Barlines never appear. Including rests requires a
    TimeAlignedScore, since plain note sequences carry no rests.
    """
    if kind not in ("pitch", "value", "note"):
        raise ValueError(f"unknown symbol kind: {kind!r}")
    if include_rests and not isinstance(source, TimeAlignedScore):
        raise ValueError("rest symbols require a TimeAlignedScore input")
    events: list[tuple[int | None, int | None]] = []
    if isinstance(source, TimeAlignedScore):
        for sym in source.symbols:
            pitch = getattr(sym, "pitch", None)
            value = getattr(sym, "value", None)
            if value is None:
                continue  # barline
            if pitch is None and not include_rests:
                continue
            events.append((pitch, value))
    else:
        for i, note in enumerate(source):
            if note.value is None and kind in ("value", "note"):
                raise ValueError(f"note {i} is missing a value")
            events.append((note.pitch, note.value))
    if kind == "pitch":
        return [p if p is not None else REST for p, _ in events]
    if kind == "value":
        return [v for _, v in events]
    return [(p if p is not None else REST, v) for p, v in events]


class CalibrationResult(NamedTuple):
    octave_shift: int
    time_shift: float
    score: float
    excluded: bool


def calibrate_labels(
    notes: Sequence[NoteEvent],
    times: Sequence[float],
    frequencies: Sequence[float],
    octave_range: int = 3,
    time_range: float = 3.0,
    time_step: float = 0.01,
    pitch_tolerance_cents: float = 50.0,
    exclusion_threshold: float = 0.55,
) -> CalibrationResult:
    """Find the octave and time shift aligning note labels to an f0 track.

    The track is per-frame (time, Hz), Hz <= 0 meaning unvoiced. A frame
    agrees when both sides are unvoiced, or both are voiced with pitches
    within the cents tolerance; the score is the agreeing fraction. All
    combinations of octave shift in [-octave_range, octave_range] and time
    shift in [-time_range, time_range] (step time_step) are scored; ties
    prefer smaller-magnitude shifts, octave first.
    """
    t = np.asarray(times, dtype=np.float64)
    f = np.asarray(frequencies, dtype=np.float64)
    if t.size == 0:
        raise ValueError("calibration needs a non-empty f0 track")
    if t.shape != f.shape:
        raise ValueError("time and frequency arrays differ in length")

    ordered = sorted(notes, key=lambda n: n.onset)
    onsets = np.array([n.onset for n in ordered], dtype=np.float64)
    offsets = np.array([n.offset for n in ordered], dtype=np.float64)
    pitches = np.array([n.pitch for n in ordered], dtype=np.float64)

    track_voiced = f > 0.0
    track_cents = np.where(
        track_voiced, 1200.0 * np.log2(np.maximum(f, 1e-12) / 440.0), 0.0
    )

    n_steps = int(round(time_range / time_step))
    time_shifts = np.arange(-n_steps, n_steps + 1) * time_step
    octave_shifts = range(-octave_range, octave_range + 1)

    best: tuple | None = None
    best_result = (0, 0.0, 0.0)
    for ts in time_shifts:
        local = t - ts
        if onsets.size:
            idx = np.searchsorted(onsets, local, side="right") - 1
            clipped = np.clip(idx, 0, onsets.size - 1)
            label_voiced = (idx >= 0) & (local < offsets[clipped])
            label_pitch = pitches[clipped]
        else:
            label_voiced = np.zeros(t.shape, dtype=bool)
            label_pitch = np.zeros(t.shape)
        both_unvoiced = ~label_voiced & ~track_voiced
        for octave in octave_shifts:
            label_cents = (label_pitch + 12.0 * octave - 69.0) * 100.0
            agree = both_unvoiced | (
                label_voiced
                & track_voiced
                & (
                    np.abs(track_cents - label_cents)
                    <= pitch_tolerance_cents + _TOL_EPS
                )
            )
            score = float(np.mean(agree))
            key = (-score, abs(octave), octave, abs(ts), ts)
            if best is None or key < best:
                best = key
                best_result = (octave, float(ts), score)
    octave, ts, score = best_result
    return CalibrationResult(octave, ts, score, score <= exclusion_threshold)


def read_f0_track(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column (time_s, hz) text file; hz <= 0 means unvoiced."""
    times: list[float] = []
    freqs: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split()
            if len(fields) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected two columns, got {len(fields)}"
                )
            try:
                times.append(float(fields[0]))
                freqs.append(float(fields[1]))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: not numeric: {text!r}") from exc
    return np.asarray(times, dtype=np.float64), np.asarray(freqs, dtype=np.float64)


def write_f0_track(path: str, times: Sequence[float], frequencies: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t, hz in zip(times, frequencies):
            fh.write(f"{t:.6f} {hz:.6f}\n")


@dataclass(frozen=True)
class EvalReport:
    """Full comparison of an estimated note sequence against a reference."""

    note_scores: dict[str, PRF]
    value_scores: dict[str, ValueScores | None] = field(default_factory=dict)
    error_rates: dict[str, dict[str, float]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out: dict = {
            "note_scores": {
                label: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f_measure": s.f_measure,
                }
                for label, s in self.note_scores.items()
            },
            "value_scores": {
                label: (
                    None
                    if s is None
                    else {"n_pairs": s.n_pairs, "accuracy": s.accuracy, "mse": s.mse}
                )
                for label, s in self.value_scores.items()
            },
            "error_rates": self.error_rates,
        }
        return out

    def format_text(self) -> str:
        lines = ["note matching (precision / recall / F):"]
        for label, s in self.note_scores.items():
            lines.append(
                f"  {label:<28} {s.precision:6.3f} / {s.recall:6.3f} / {s.f_measure:6.3f}"
            )
        if self.value_scores:
            lines.append("value scores over matched pairs:")
            for label, s in self.value_scores.items():
                if s is None:
                    lines.append(f"  matched on {label:<17} (no matched pairs)")
                else:
                    lines.append(
                        f"  matched on {label:<17} accuracy {s.accuracy:.3f}, "
                        f"MSE {s.mse:.3f} over {s.n_pairs} pairs"
                    )
        if self.error_rates:
            lines.append("error rates (%):")
            for scope, rates in self.error_rates.items():
                parts = ", ".join(f"{kind} {rate:.1f}" for kind, rate in rates.items())
                lines.append(f"  {scope}: {parts}")
        return "\n".join(lines) + "\n"


def _all_valued(notes: Sequence[NoteEvent]) -> bool:
    return all(n.value is not None for n in notes)


def evaluate(
    reference: Sequence[NoteEvent],
    estimate: Sequence[NoteEvent],
    reference_score: TimeAlignedScore | None = None,
    estimate_score: TimeAlignedScore | None = None,
) -> EvalReport:
    """Score an estimate against a reference on every standard axis.

    Value-dependent sections (value criteria, value accuracy/MSE, value and
    note error rates, rest-aware rates) are included only when both
    sequences carry values throughout. Error rates are omitted for an empty
    reference. Rest-aware rates rebuild scores from the note sequences
    unless explicit scores are supplied.
    """
    valued = _all_valued(reference) and _all_valued(estimate)

    note_scores: dict[str, PRF] = {}
    for label, criteria in standard_criteria().items():
        if criteria.use_value and not valued:
            continue
        note_scores[label] = prf(match_notes(reference, estimate, criteria))

    value_scores: dict[str, ValueScores | None] = {}
    if valued:
        conditions = {
            "onset+offset": MatchCriteria(
                use_onset=True, use_offset=True, use_pitch=False
            ),
            "onset+offset+pitch": MatchCriteria(
                use_onset=True, use_offset=True, use_pitch=True
            ),
        }
        for label, criteria in conditions.items():
            value_scores[label] = value_accuracy_mse(reference, estimate, criteria)

    error_rates: dict[str, dict[str, float]] = {}
    if reference:
        rates: dict[str, float] = {
            "pitch": error_rate(
                symbol_sequence(reference, "pitch"), symbol_sequence(estimate, "pitch")
            )
        }
        if valued:
            rates["value"] = error_rate(
                symbol_sequence(reference, "value"), symbol_sequence(estimate, "value")
            )
            rates["note"] = error_rate(
                symbol_sequence(reference, "note"), symbol_sequence(estimate, "note")
            )
        error_rates["notes"] = rates
        have_scores = reference_score is not None and estimate_score is not None
        if valued or have_scores:
            ref_score = reference_score if have_scores else build_score(reference)
            est_score = estimate_score if have_scores else (
                build_score(estimate) if estimate else TimeAlignedScore(())
            )
            with_rests: dict[str, float] = {}
            for kind in ("pitch", "value", "note"):
                ref_syms = symbol_sequence(ref_score, kind, include_rests=True)
                est_syms = symbol_sequence(est_score, kind, include_rests=True)
                if ref_syms:
                    with_rests[kind] = error_rate(ref_syms, est_syms)
            error_rates["notes_and_rests"] = with_rests

    return EvalReport(note_scores, value_scores, error_rates)

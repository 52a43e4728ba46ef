"""Beat-grid quantization: deriving note values from tracked beats.

Quarter-note beat times are subdivided into four equal sixteenth steps; a
note's value is the number of grid steps between its snapped onset and
snapped offset, clamped to the representable range.
"""

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .notes import DataFormatError, NoteEvent, NoteSequence

SIXTEENTHS_PER_BEAT = 4

_EPS = 1e-9


@dataclass(frozen=True)
class BeatGrid:
    """Sixteenth-note grid instants interpolated from quarter-note beats."""

    times: tuple[float, ...]
    beats: tuple[float, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.times, self.times[1:]):
            if not a < b:
                raise ValueError("grid times must be strictly increasing")


def build_grid(beats: Sequence[float], span: tuple[float, float]) -> BeatGrid:
    """Subdivide beat intervals into sixteenths and cover the requested span.

    Outside the first/last beat the grid is extended by repeating the nearest
    interval's step until span = (t_min, t_max) is covered. Needs at least
    two strictly increasing beats.
    """
    if len(beats) < 2:
        raise ValueError("need at least two beat times to derive a grid step")
    for a, b in zip(beats, beats[1:]):
        if not a < b:
            raise ValueError("beat times must be strictly increasing")
    t_min, t_max = span

    points: list[float] = []
    for a, b in zip(beats, beats[1:]):
        step = (b - a) / SIXTEENTHS_PER_BEAT
        points.extend(a + j * step for j in range(SIXTEENTHS_PER_BEAT))
    points.append(beats[-1])

    first_step = (beats[1] - beats[0]) / SIXTEENTHS_PER_BEAT
    if t_min < points[0] - _EPS:
        n_pre = math.ceil((points[0] - t_min) / first_step - _EPS)
        points = [points[0] - j * first_step for j in range(n_pre, 0, -1)] + points
    last_step = (beats[-1] - beats[-2]) / SIXTEENTHS_PER_BEAT
    if t_max > points[-1] + _EPS:
        n_post = math.ceil((t_max - points[-1]) / last_step - _EPS)
        anchor = points[-1]
        points.extend(anchor + j * last_step for j in range(1, n_post + 1))
    return BeatGrid(tuple(points), tuple(beats))


def snap_index(grid: BeatGrid, t: float) -> int:
    """Index of the grid instant nearest t; exact midpoints go earlier."""
    times = grid.times
    i = int(np.searchsorted(np.asarray(times), t))
    if i == 0:
        return 0
    if i == len(times):
        return len(times) - 1
    return i - 1 if (t - times[i - 1]) <= (times[i] - t) else i


def quantize_note(
    grid: BeatGrid, onset: float, offset: float, value_max: int = 32
) -> int:
    """Note value in sixteenths: snapped offset index minus snapped onset
    index, clamped to [1, value_max]."""
    raw = snap_index(grid, offset) - snap_index(grid, onset)
    return min(max(raw, 1), value_max)


def pseudo_label(
    notes: Sequence[NoteEvent], beats: Sequence[float], value_max: int = 32
) -> NoteSequence:
    """Assign every note a value from the beat grid.

    Times and pitches pass through unchanged; existing values are replaced.
    The grid is extended to cover the full note span.
    """
    if not notes:
        return ()
    span = (min(n.onset for n in notes), max(n.offset for n in notes))
    grid = build_grid(beats, span)
    return tuple(
        replace(n, value=quantize_note(grid, n.onset, n.offset, value_max))
        for n in notes
    )


def label_quality_report(
    pseudo: Sequence[NoteEvent], reference: Sequence[NoteEvent]
) -> dict:
    """Note-by-note comparison of assigned values against reference values.

    Sequences must have equal length and be index-aligned, with values on
    both sides. Returns {"n", "match_rate", "histogram"} where the histogram
    maps signed value difference (pseudo minus reference) to its count.
    """
    if len(pseudo) != len(reference):
        raise ValueError(
            f"sequences differ in length: {len(pseudo)} vs {len(reference)}"
        )
    histogram: dict[int, int] = {}
    exact = 0
    for i, (p, r) in enumerate(zip(pseudo, reference)):
        if p.value is None or r.value is None:
            raise ValueError(f"note {i} is missing a value")
        diff = p.value - r.value
        histogram[diff] = histogram.get(diff, 0) + 1
        if diff == 0:
            exact += 1
    n = len(pseudo)
    rate = exact / n if n else 0.0
    return {
        "n": n,
        "match_rate": rate,
        "histogram": dict(sorted(histogram.items())),
    }


def histogram_svg(histogram: dict[int, int], title: str = "value difference") -> str:
    """Render a histogram as a small self-contained SVG bar chart.

    Deterministic output: same input, same bytes.
    """
    width, height = 480, 240
    margin = 36
    keys = sorted(histogram)
    if not keys:
        keys = [0]
        histogram = {0: 0}
    top = max(max(histogram.values()), 1)
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    bar_w = plot_w / len(keys)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{title}</text>',
    ]
    for idx, key in enumerate(keys):
        count = histogram[key]
        bar_h = plot_h * count / top
        x = margin + idx * bar_w
        y = height - margin - bar_h
        parts.append(
            f'<rect x="{x + 1:.2f}" y="{y:.2f}" width="{bar_w - 2:.2f}" '
            f'height="{bar_h:.2f}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{height - margin + 14:.1f}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">{key:+d}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{max(y - 4, 12):.2f}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="10">{count}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_beats(path: str) -> tuple[float, ...]:
    """Read beat times, one float per line (blank lines ignored)."""
    beats = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                beats.append(float(text))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: not a number: {text!r}") from exc
    return tuple(beats)


def write_beats(path: str, beats: Iterable[float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in beats:
            fh.write(f"{b}\n")

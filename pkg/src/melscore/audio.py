"""Audio front end: STFT features, sinusoidal rendering, and a naive
spectral-peak transcriber.

Everything runs at 16 kHz with a 10 ms frame period so that spectrogram
frame indices line up one-to-one with the codec's time tokens. The renderer
and the naive transcriber together close the loop for end-to-end tests:
render a melody, transcribe it back, and compare.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.io import wavfile

from .notes import DataFormatError, NoteEvent, NoteSequence, SegmentWindow

SAMPLE_RATE = 16_000
HOP_SAMPLES = 160
WINDOW_SAMPLES = 2_048


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Magnitude STFT frames; frame k is centered at start + k * 10 ms."""

    frames: np.ndarray
    sample_rate: int = SAMPLE_RATE
    hop: int = HOP_SAMPLES
    start: float = 0.0

    def __post_init__(self) -> None:
        if self.frames.ndim != 2:
            raise ValueError("frames must be a 2-D (time, bins) array")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]

    @property
    def frame_period(self) -> float:
        return self.hop / self.sample_rate

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / (2 * (self.n_bins - 1))

    @property
    def duration(self) -> float:
        return self.n_frames * self.frame_period

    def segment(self, window: SegmentWindow) -> "Spectrogram":
        """Slice out a window's frames, zero-padding past the end."""
        first = int(round((window.start - self.start) / self.frame_period))
        count = int(round(window.length / self.frame_period))
        if first < 0:
            raise ValueError("window starts before the spectrogram")
        chunk = self.frames[first : first + count]
        if chunk.shape[0] < count:
            pad = np.zeros((count - chunk.shape[0], self.n_bins))
            chunk = np.vstack([chunk, pad])
        return replace(self, frames=chunk, start=window.start)


def stft(
    waveform: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    window_size: int = WINDOW_SAMPLES,
    hop: int = HOP_SAMPLES,
) -> Spectrogram:
    """Centered magnitude STFT: one frame per hop, reflect-padded edges."""
    wave = np.asarray(waveform, dtype=np.float64)
    if wave.ndim != 1 or wave.size == 0:
        raise ValueError("waveform must be a non-empty 1-D array")
    n_frames = math.ceil(wave.size / hop)
    half = window_size // 2
    padded = np.pad(wave, (half, half), mode="reflect" if wave.size > 1 else "edge")
    window = np.hanning(window_size + 1)[:-1]
    offsets = np.arange(n_frames) * hop
    index = offsets[:, None] + np.arange(window_size)[None, :]
    frames = np.abs(np.fft.rfft(padded[index] * window, axis=1))
    return Spectrogram(frames, sample_rate=sample_rate, hop=hop)


def pitch_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69.0) / 12.0)


def hz_to_pitch(hz: float) -> float:
    return 69.0 + 12.0 * math.log2(hz / 440.0)


def render(
    notes: NoteSequence,
    duration: float | None = None,
    sample_rate: int = SAMPLE_RATE,
    gain: float = 0.25,
    fade: float = 0.01,
) -> np.ndarray:
    """Sum of sinusoids: each note a sine at its pitch's frequency, active
    on [onset, offset) with short linear fades at both ends."""
    if duration is None:
        duration = max((n.offset for n in notes), default=0.0)
    n_samples = int(round(duration * sample_rate))
    out = np.zeros(n_samples, dtype=np.float64)
    for note in notes:
        i0 = int(round(note.onset * sample_rate))
        i1 = min(int(round(note.offset * sample_rate)), n_samples)
        if i1 <= i0:
            continue
        t = np.arange(i0, i1) / sample_rate - note.onset
        tone = np.sin(2.0 * np.pi * pitch_to_hz(note.pitch) * t)
        n_fade = min(int(round(fade * sample_rate)), (i1 - i0) // 2)
        if n_fade > 0:
            ramp = np.linspace(0.0, 1.0, n_fade, endpoint=False)
            tone[:n_fade] *= ramp
            tone[-n_fade:] *= ramp[::-1]
        out[i0:i1] += tone
    return gain * out


def silence_threshold(spec: Spectrogram) -> float:
    """Ten times the median per-frame peak magnitude.

    A sensible voicing threshold when the recording is mostly silence;
    for densely voiced material prefer the transcriber's default, which is
    a fraction of the loudest frame.
    """
    peaks = spec.frames.max(axis=1)
    return 10.0 * float(np.median(peaks))


def naive_transcribe(
    spec: Spectrogram,
    energy_threshold: float | None = None,
    min_note_frames: int = 5,
) -> NoteSequence:
    """Monophonic transcription by per-frame spectral peak picking.

    A frame is voiced when its peak magnitude reaches the threshold
    (default: 5% of the loudest frame); its pitch is the nearest MIDI note
    to the peak bin's frequency. Consecutive equal-pitch frames merge into
    notes, and runs shorter than min_note_frames are dropped. Pitches come
    back unvalued.
    """
    peaks = spec.frames.max(axis=1)
    bins = spec.frames.argmax(axis=1)
    top = float(peaks.max(initial=0.0))
    if top <= 0.0:
        return ()
    threshold = 0.05 * top if energy_threshold is None else energy_threshold

    period = spec.frame_period
    pitches = np.full(spec.n_frames, -1, dtype=np.int64)
    voiced = (peaks >= threshold) & (bins > 0)
    hz = bins[voiced] * spec.bin_hz
    midi = np.round(69.0 + 12.0 * np.log2(hz / 440.0)).astype(np.int64)
    pitches[voiced] = np.clip(midi, 0, 127)

    notes: list[NoteEvent] = []
    run_start = 0
    for i in range(1, spec.n_frames + 1):
        if i < spec.n_frames and pitches[i] == pitches[run_start]:
            continue
        if pitches[run_start] >= 0 and i - run_start >= min_note_frames:
            notes.append(
                NoteEvent(
                    onset=spec.start + run_start * period,
                    offset=spec.start + i * period,
                    pitch=int(pitches[run_start]),
                )
            )
        run_start = i
    return tuple(notes)


def synthetic_melody(
    rng: np.random.Generator,
    n_notes: int = 12,
    bpm: float = 120.0,
    pitch_low: int = 55,
    pitch_high: int = 79,
    rest_probability: float = 0.25,
    values: tuple[int, ...] = (1, 2, 3, 4, 6, 8),
) -> tuple[NoteSequence, tuple[float, ...]]:
    """Random on-grid melody plus the quarter-note beat times that place it.

    Notes sit exactly on the sixteenth grid of the given tempo, values are
    drawn from `values`, short rests appear with the given probability, and
    consecutive notes never repeat a pitch.
    """
    if n_notes < 1:
        raise ValueError("need at least one note")
    sixteenth = 60.0 / bpm / 4.0
    pos = 0
    pitch = int(rng.integers(pitch_low, pitch_high + 1))
    notes = []
    for _ in range(n_notes):
        value = int(rng.choice(values))
        notes.append(
            NoteEvent(
                onset=pos * sixteenth,
                offset=(pos + value) * sixteenth,
                pitch=pitch,
                value=value,
            )
        )
        pos += value
        if rng.random() < rest_probability:
            pos += int(rng.integers(1, 5))
        step = int(rng.integers(1, 6)) * (1 if rng.random() < 0.5 else -1)
        nxt = pitch + step
        if not pitch_low <= nxt <= pitch_high:
            nxt = pitch - step
        pitch = int(np.clip(nxt, pitch_low, pitch_high))
        if pitch == notes[-1].pitch:
            pitch = pitch + 1 if pitch < pitch_high else pitch - 1
    end = notes[-1].offset
    quarter = 60.0 / bpm
    n_beats = math.ceil(end / quarter) + 1
    beats = tuple(k * quarter for k in range(max(n_beats, 2)))
    return tuple(notes), beats


def read_wav(path: str, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Load a mono WAV at the required rate as float64 in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise DataFormatError(f"{path}: not a readable WAV file: {exc}") from exc
    if rate != sample_rate:
        raise DataFormatError(
            f"{path}: sample rate {rate} Hz unsupported; resample to {sample_rate} Hz"
        )
    if data.ndim != 1:
        raise DataFormatError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise DataFormatError(
        f"{path}: unsupported sample format {data.dtype}; use 16-bit PCM or 32-bit float"
    )


def write_wav(path: str, waveform: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    clipped = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, sample_rate, clipped.astype(np.float32))


def write_features(path: str, spec: Spectrogram) -> None:
    """Dump a spectrogram: one JSON header line, then raw float32 frames."""
    header = {
        "frames": spec.n_frames,
        "bins": spec.n_bins,
        "frame_period": spec.frame_period,
        "sample_rate": spec.sample_rate,
        "start": spec.start,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(spec.frames.astype("<f4").tobytes())


def read_features(path: str) -> Spectrogram:
    with open(path, "rb") as fh:
        line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
        n_frames = int(header["frames"])
        n_bins = int(header["bins"])
        sample_rate = int(header["sample_rate"])
        frame_period = float(header["frame_period"])
        start = float(header.get("start", 0.0))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad feature header: {exc}") from exc
    data = np.frombuffer(body, dtype="<f4")
    if data.size != n_frames * n_bins:
        raise DataFormatError(
            f"{path}: payload holds {data.size} values, header promises "
            f"{n_frames * n_bins}"
        )
    frames = data.reshape(n_frames, n_bins).astype(np.float64)
    return Spectrogram(
        frames,
        sample_rate=sample_rate,
        hop=int(round(frame_period * sample_rate)),
        start=start,
    )

"""melscore: note-level singing transcription to time-aligned scores.

Monophonic melodies are modeled as (onset, pitch, offset, value) events,
tokenized per fixed-length segment, decoded under a grammar mask from any
score provider, stitched across overlapping segments, quantized to beat
grids, assembled into 4/4 scores with rests and barlines, and evaluated
with matching-based and edit-distance metrics.
"""

from .audio import (
    Spectrogram,
    hz_to_pitch,
    naive_transcribe,
    pitch_to_hz,
    read_features,
    read_wav,
    render,
    silence_threshold,
    stft,
    synthetic_melody,
    write_features,
    write_wav,
)
from .beatgrid import (
    BeatGrid,
    build_grid,
    histogram_svg,
    label_quality_report,
    pseudo_label,
    quantize_note,
    read_beats,
    snap_index,
    write_beats,
)
from .codec import (
    SegmentContent,
    SegmentDecode,
    SegmentTokens,
    crop_labels,
    decode_tokens,
    encode_segment,
    seconds_to_frame,
    segment_token_errors,
    shift_pitch_labels,
    slice_segments,
    tokens_from_text,
    tokens_to_text,
    window_content,
)
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .decoding import (
    DecoderState,
    FeatureSource,
    ProviderProtocolError,
    ScoreProvider,
    WindowFeatures,
    decode,
    legal_mask,
    notes_oracle_provider,
    notes_to_provider,
    oracle_provider,
    stitch,
)
from .metrics import (
    REST,
    CalibrationResult,
    EvalReport,
    MatchCriteria,
    Matching,
    PRF,
    ValueScores,
    calibrate_labels,
    error_rate,
    evaluate,
    levenshtein,
    match_notes,
    note_pair_ok,
    prf,
    read_f0_track,
    standard_criteria,
    symbol_sequence,
    value_accuracy_mse,
    write_f0_track,
)
from .notes import (
    DataFormatError,
    NoteEvent,
    NoteSequence,
    SegmentWindow,
    read_notes_jsonl,
    round_half_away,
    validate_sequence,
    write_notes_jsonl,
)
from .score import (
    Barline,
    ScoreNote,
    ScoreRest,
    TimeAlignedScore,
    build_score,
    parse_timed_json,
    to_musicxml,
    to_timed_json,
    validate_musicxml,
)
from .vocab import Token, TokenType, Vocabulary
from .wire import (
    RegisteredSegmentSource,
    WireProvider,
    feature_oracle_scorer,
    serve_connection,
    serve_tcp,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Command-line entry point: the full pipeline and its stages.

Subcommands: synth (make test material), pseudo-label (assign note values
from beats), encode/decode (token codec), transcribe (audio to notes via a
score provider, with optional score output and evaluation), score (notes to
MusicXML/JSON), eval (compare note files), report (pseudo-label quality).

Exit codes: 0 success, 1 usage or configuration error, 2 data-format
error, 3 provider-protocol error.
"""

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import audio as audio_mod
from .beatgrid import histogram_svg, label_quality_report, pseudo_label, read_beats, write_beats
from .codec import (
    decode_tokens,
    encode_segment,
    tokens_from_text,
    tokens_to_text,
    window_content,
)
from .config import ConfigError, RunConfig, load_config
from .decoding import (
    ProviderProtocolError,
    WindowFeatures,
    notes_oracle_provider,
    stitch,
)
from .metrics import evaluate
from .notes import DataFormatError, NoteEvent, SegmentWindow, read_notes_jsonl, write_notes_jsonl
from .score import build_score, parse_timed_json, to_musicxml, to_timed_json
from .wire import RegisteredSegmentSource, WireProvider


class UsageError(Exception):
    """Bad command line or unusable combination of options."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML config file (or set MELSCORE_CONFIG)")
    common.add_argument(
        "--json", action="store_true", help="emit machine-readable JSON reports"
    )

    parser = _Parser(prog="melscore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser(
        "synth", parents=[common], help="generate a synthetic melody: wav, notes, beats"
    )
    p.add_argument("--out", required=True, help="output basename (writes .wav/.jsonl/.beats)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--notes-count", type=int, default=12)
    p.add_argument("--bpm", type=float, default=120.0)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser(
        "pseudo-label", parents=[common], help="assign note values from beat times"
    )
    p.add_argument("--notes", required=True, help="input notes JSONL")
    p.add_argument("--beats", required=True, help="beat times, one per line")
    p.add_argument("--out", required=True, help="output notes JSONL")
    p.set_defaults(handler=_cmd_pseudo_label)

    p = sub.add_parser(
        "encode", parents=[common], help="tokenize one segment window of a note file"
    )
    p.add_argument("--notes", required=True)
    p.add_argument("--start", type=float, default=0.0, help="window start in seconds")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(handler=_cmd_encode)

    p = sub.add_parser(
        "decode", parents=[common], help="detokenize a segment back into notes"
    )
    p.add_argument("--tokens", required=True, help="token text file (or ids JSON)")
    p.add_argument("--start", type=float, default=0.0, help="window start in seconds")
    p.add_argument("--out", help="output notes JSONL (default: stdout)")
    p.set_defaults(handler=_cmd_decode)

    p = sub.add_parser(
        "transcribe",
        parents=[common],
        help="audio to notes through a score provider, stitched across segments",
    )
    p.add_argument("audio", nargs="+", help="input WAV file(s), 16 kHz mono")
    p.add_argument(
        "--provider",
        required=True,
        help="oracle:<notes.jsonl> | naive | external:<host>:<port>",
    )
    p.add_argument("--beats", help="beat times; required by the naive provider")
    p.add_argument("--out", help="output notes JSONL (single input only)")
    p.add_argument("--out-dir", help="output directory (for several inputs)")
    p.add_argument("--score-out", action="store_true", help="also write score files")
    p.add_argument("--reference", help="reference notes JSONL to evaluate against")
    p.add_argument("--jobs", type=int, default=1, help="parallel songs")
    p.set_defaults(handler=_cmd_transcribe)

    p = sub.add_parser(
        "score", parents=[common], help="build a time-aligned score from valued notes"
    )
    p.add_argument("--notes", required=True)
    p.add_argument("--out", required=True, help="output basename (.musicxml and .score.json)")
    p.set_defaults(handler=_cmd_score)

    p = sub.add_parser(
        "eval", parents=[common], help="compare an estimated note file to a reference"
    )
    p.add_argument("--reference", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--reference-score", help="timed-score JSON for rest-aware rates")
    p.add_argument("--estimate-score", help="timed-score JSON for rest-aware rates")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser(
        "report", parents=[common], help="pseudo-label quality report and histogram"
    )
    p.add_argument("--pseudo", required=True, help="pseudo-labeled notes JSONL")
    p.add_argument("--reference", required=True, help="reference valued notes JSONL")
    p.add_argument("--svg", help="write the value-difference histogram here")
    p.set_defaults(handler=_cmd_report)

    return parser


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _cmd_synth(args, config: RunConfig) -> int:
    rng = np.random.default_rng(args.seed)
    notes, beats = audio_mod.synthetic_melody(
        rng, n_notes=args.notes_count, bpm=args.bpm
    )
    wave = audio_mod.render(notes, duration=notes[-1].offset + 0.25)
    audio_mod.write_wav(args.out + ".wav", wave, config.sample_rate)
    write_notes_jsonl(args.out + ".jsonl", notes)
    write_beats(args.out + ".beats", beats)
    if args.json:
        print(json.dumps({"notes": len(notes), "duration": notes[-1].offset}))
    else:
        print(f"wrote {args.out}.wav, {args.out}.jsonl, {args.out}.beats")
    return 0


def _cmd_pseudo_label(args, config: RunConfig) -> int:
    notes = read_notes_jsonl(args.notes)
    beats = read_beats(args.beats)
    labeled = pseudo_label(notes, beats, config.value_max)
    write_notes_jsonl(args.out, labeled)
    return 0


def _cmd_encode(args, config: RunConfig) -> int:
    notes = read_notes_jsonl(args.notes)
    vocab = config.vocabulary()
    window = SegmentWindow(args.start, config.segment_seconds)
    ids = encode_segment(window_content(notes, window), vocab).ids
    if args.json:
        _emit(json.dumps({"ids": list(ids)}) + "\n", args.out)
    else:
        _emit(tokens_to_text(ids, vocab) + "\n", args.out)
    return 0


def _cmd_decode(args, config: RunConfig) -> int:
    with open(args.tokens, "r", encoding="utf-8") as fh:
        text = fh.read().strip()
    vocab = config.vocabulary()
    if text.startswith("{"):
        try:
            ids = json.loads(text)["ids"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataFormatError(f"{args.tokens}: bad token JSON: {exc}") from exc
    else:
        ids = tokens_from_text(text, vocab)
    window = SegmentWindow(args.start, config.segment_seconds)
    result = decode_tokens(ids, window, vocab)
    if result.invalid_count:
        print(f"{result.invalid_count} invalid token group(s) skipped", file=sys.stderr)
    if args.out is None:
        for note in result.notes:
            print(json.dumps(_note_json(note)))
    else:
        write_notes_jsonl(args.out, result.notes)
    return 0


def _note_json(note: NoteEvent) -> dict:
    return {
        "onset": note.onset,
        "offset": note.offset,
        "pitch": note.pitch,
        "value": note.value,
    }


def _parse_provider_spec(spec: str) -> tuple[str, object]:
    kind, _, rest = spec.partition(":")
    if kind == "naive" and not rest:
        return "naive", None
    if kind == "oracle" and rest:
        return "oracle", rest
    if kind == "external" and rest:
        host, _, port = rest.rpartition(":")
        if host and port.isdigit():
            return "external", (host, int(port))
    raise UsageError(
        f"bad provider {spec!r}; use oracle:<notes.jsonl>, naive, or "
        "external:<host>:<port>"
    )


def _transcribe_one(audio_path: str, args, config: RunConfig) -> tuple[str, dict]:
    vocab = config.vocabulary()
    wave = audio_mod.read_wav(audio_path, config.sample_rate)
    spec = audio_mod.stft(wave, config.sample_rate)
    kind, detail = _parse_provider_spec(args.provider)

    provider = None
    wire: WireProvider | None = None
    scratch: tempfile.TemporaryDirectory | None = None
    if kind == "oracle":
        oracle_notes = read_notes_jsonl(str(detail))
        provider = notes_oracle_provider(oracle_notes, vocab)
        features = WindowFeatures(spec.duration)
    elif kind == "naive":
        if not args.beats:
            raise UsageError("the naive provider needs --beats")
        beats = read_beats(args.beats)
        raw = audio_mod.naive_transcribe(spec)
        valued = pseudo_label(raw, beats, config.value_max)
        provider = notes_oracle_provider(valued, vocab)
        features = WindowFeatures(spec.duration)
    else:
        host, port = detail
        try:
            wire = WireProvider.connect(host, port, vocab)
        except OSError as exc:
            raise ProviderProtocolError(
                f"cannot reach provider at {host}:{port}: {exc}"
            ) from exc
        scratch = tempfile.TemporaryDirectory(prefix="melscore-features-")
        provider = wire
        features = RegisteredSegmentSource(spec, wire, scratch.name)

    try:
        notes = stitch(
            provider,
            features,
            vocab,
            segment_seconds=config.segment_seconds,
            hop_seconds=config.hop_seconds,
            discard_seconds=config.discard_seconds,
            max_len=config.max_output_len,
        )
    finally:
        if wire is not None:
            wire.close()
        if scratch is not None:
            scratch.cleanup()

    stem = os.path.splitext(os.path.basename(audio_path))[0]
    if args.out is not None:
        notes_path = args.out
        base = os.path.splitext(args.out)[0]
    else:
        out_dir = args.out_dir or os.path.dirname(audio_path) or "."
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, stem)
        notes_path = base + ".notes.jsonl"
    write_notes_jsonl(notes_path, notes)
    written = {"notes": notes_path}

    if args.score_out:
        if not notes:
            print(f"{audio_path}: no notes transcribed; skipping score", file=sys.stderr)
        else:
            built = build_score(notes)
            _emit(to_musicxml(built), base + ".musicxml")
            _emit(to_timed_json(built), base + ".score.json")
            written["musicxml"] = base + ".musicxml"
            written["score"] = base + ".score.json"

    result: dict = {"audio": audio_path, "written": written, "n_notes": len(notes)}
    if args.reference:
        reference = read_notes_jsonl(args.reference)
        report = evaluate(reference, notes)
        result["report"] = report
    return audio_path, result


def _cmd_transcribe(args, config: RunConfig) -> int:
    if args.out is not None and len(args.audio) > 1:
        raise UsageError("--out works with a single input; use --out-dir")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    results = []
    if args.jobs == 1 or len(args.audio) == 1:
        for path in args.audio:
            results.append(_transcribe_one(path, args, config))
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(
                pool.map(lambda p: _transcribe_one(p, args, config), args.audio)
            )
    for _, result in results:
        report = result.pop("report", None)
        if args.json:
            payload = dict(result)
            if report is not None:
                payload["report"] = report.as_dict()
            print(json.dumps(payload))
        else:
            print(f"{result['audio']}: {result['n_notes']} notes -> {result['written']['notes']}")
            if report is not None:
                print(report.format_text(), end="")
    return 0


def _cmd_score(args, config: RunConfig) -> int:
    notes = read_notes_jsonl(args.notes)
    built = build_score(notes)
    base = os.path.splitext(args.out)[0] if args.out.endswith(".musicxml") else args.out
    _emit(to_musicxml(built), base + ".musicxml")
    _emit(to_timed_json(built), base + ".score.json")
    if not args.json:
        print(f"wrote {base}.musicxml and {base}.score.json")
    else:
        print(json.dumps({"musicxml": base + ".musicxml", "score": base + ".score.json"}))
    return 0


def _cmd_eval(args, config: RunConfig) -> int:
    reference = read_notes_jsonl(args.reference)
    estimate = read_notes_jsonl(args.estimate)
    scores = {}
    for name, path in (("reference", args.reference_score), ("estimate", args.estimate_score)):
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                scores[name] = parse_timed_json(fh.read())
    report = evaluate(
        reference,
        estimate,
        reference_score=scores.get("reference"),
        estimate_score=scores.get("estimate"),
    )
    if args.json:
        print(json.dumps(report.as_dict()))
    else:
        print(report.format_text(), end="")
    return 0


def _cmd_report(args, config: RunConfig) -> int:
    pseudo = read_notes_jsonl(args.pseudo)
    reference = read_notes_jsonl(args.reference)
    stats = label_quality_report(pseudo, reference)
    if args.svg:
        _emit(histogram_svg(stats["histogram"]), args.svg)
    if args.json:
        payload = dict(stats)
        payload["histogram"] = {str(k): v for k, v in stats["histogram"].items()}
        print(json.dumps(payload))
    else:
        print(f"{stats['n']} notes, {100.0 * stats['match_rate']:.1f}% exact values")
        for diff, count in stats["histogram"].items():
            print(f"  {diff:+d}: {count}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(args.config)
        return args.handler(args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProviderProtocolError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end tests for the command-line interface: every subcommand, the
exit-code contract, config handling, and the external provider path."""

import json
import socket
import subprocess
import threading

import pytest

from melscore import (
    NoteEvent,
    Vocabulary,
    feature_oracle_scorer,
    read_notes_jsonl,
    serve_tcp,
    write_notes_jsonl,
)
from melscore.cli import main


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("MELSCORE_CONFIG", raising=False)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def song(tmp_path_factory):
    """A synthetic melody generated through the CLI itself."""
    base = str(tmp_path_factory.mktemp("song") / "tune")
    code = main(["synth", "--out", base, "--seed", "7", "--notes-count", "10"])
    assert code == 0
    return base


ON_FRAME_NOTES = (
    NoteEvent(0.50, 1.00, 60, 4),
    NoteEvent(1.20, 1.50, 64, 2),
    NoteEvent(2.00, 3.00, 67, 8),
)


@pytest.fixture()
def on_frame_file(tmp_path):
    path = str(tmp_path / "notes.jsonl")
    write_notes_jsonl(path, ON_FRAME_NOTES)
    return path


class TestSynth:
    def test_writes_wav_notes_and_beats(self, capsys, tmp_path):
        base = str(tmp_path / "out")
        code, out, _ = run(capsys, "synth", "--out", base, "--seed", "1")
        assert code == 0
        assert "wrote" in out
        for suffix in (".wav", ".jsonl", ".beats"):
            assert (tmp_path / ("out" + suffix)).exists()

    def test_json_report(self, capsys, tmp_path):
        base = str(tmp_path / "out")
        code, out, _ = run(capsys, "synth", "--out", base, "--json", "--notes-count", "6")
        assert code == 0
        payload = json.loads(out)
        assert payload["notes"] == 6
        assert payload["duration"] > 0

    def test_same_seed_is_deterministic(self, capsys, tmp_path):
        a, b, c = (str(tmp_path / name) for name in ("a", "b", "c"))
        run(capsys, "synth", "--out", a, "--seed", "3")
        run(capsys, "synth", "--out", b, "--seed", "3")
        run(capsys, "synth", "--out", c, "--seed", "4")
        read = lambda base, ext: open(base + ext, "rb").read()
        assert read(a, ".jsonl") == read(b, ".jsonl")
        assert read(a, ".wav") == read(b, ".wav")
        assert read(a, ".jsonl") != read(c, ".jsonl")

    def test_console_script_is_installed(self, tmp_path):
        base = str(tmp_path / "out")
        proc = subprocess.run(
            ["melscore", "synth", "--out", base, "--json"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["notes"] > 0


class TestPseudoLabelCmd:
    def test_round_trips_on_grid_values(self, capsys, song, tmp_path):
        out = str(tmp_path / "relabeled.jsonl")
        code, _, _ = run(
            capsys, "pseudo-label", "--notes", song + ".jsonl", "--beats",
            song + ".beats", "--out", out,
        )
        assert code == 0
        original = read_notes_jsonl(song + ".jsonl")
        relabeled = read_notes_jsonl(out)
        assert [n.value for n in relabeled] == [n.value for n in original]

    def test_missing_beats_file_is_usage_error(self, capsys, song, tmp_path):
        code, _, err = run(
            capsys, "pseudo-label", "--notes", song + ".jsonl", "--beats",
            str(tmp_path / "nope.beats"), "--out", str(tmp_path / "x.jsonl"),
        )
        assert code == 1
        assert "nope.beats" in err


class TestEncodeDecode:
    def test_text_round_trip_through_files(self, capsys, on_frame_file, tmp_path):
        tokens = str(tmp_path / "tokens.txt")
        code, _, _ = run(capsys, "encode", "--notes", on_frame_file, "--out", tokens)
        assert code == 0
        text = open(tokens).read()
        assert text.startswith("SOS ")

        decoded = str(tmp_path / "decoded.jsonl")
        code, _, err = run(capsys, "decode", "--tokens", tokens, "--out", decoded)
        assert code == 0
        assert err == ""
        assert read_notes_jsonl(decoded) == ON_FRAME_NOTES

    def test_json_ids_round_trip(self, capsys, on_frame_file, tmp_path):
        tokens = str(tmp_path / "tokens.json")
        code, _, _ = run(
            capsys, "encode", "--notes", on_frame_file, "--json", "--out", tokens
        )
        assert code == 0
        ids = json.loads(open(tokens).read())["ids"]
        assert ids[0] == 1 and ids[-1] == 2

        code, out, _ = run(capsys, "decode", "--tokens", tokens)
        assert code == 0
        parsed = [json.loads(line) for line in out.splitlines()]
        assert [p["pitch"] for p in parsed] == [60, 64, 67]

    def test_encode_respects_window_start(self, capsys, tmp_path):
        notes_path = str(tmp_path / "late.jsonl")
        write_notes_jsonl(notes_path, (NoteEvent(6.00, 6.50, 72, 4),))
        tokens = str(tmp_path / "tokens.txt")
        decoded = str(tmp_path / "decoded.jsonl")
        run(capsys, "encode", "--notes", notes_path, "--start", "5.12", "--out", tokens)
        code, _, _ = run(
            capsys, "decode", "--tokens", tokens, "--start", "5.12", "--out", decoded
        )
        assert code == 0
        assert read_notes_jsonl(decoded) == (NoteEvent(6.00, 6.50, 72, 4),)

    def test_bad_token_word_is_a_data_error(self, capsys, tmp_path):
        tokens = str(tmp_path / "bad.txt")
        open(tokens, "w").write("SOS BLAH EOS\n")
        code, _, err = run(capsys, "decode", "--tokens", tokens)
        assert code == 2
        assert "BLAH" in err

    def test_bad_token_json_is_a_data_error(self, capsys, tmp_path):
        tokens = str(tmp_path / "bad.json")
        open(tokens, "w").write('{"wrong": 1}\n')
        code, _, err = run(capsys, "decode", "--tokens", tokens)
        assert code == 2

    def test_malformed_notes_file_is_a_data_error(self, capsys, tmp_path):
        notes_path = str(tmp_path / "bad.jsonl")
        open(notes_path, "w").write('{"onset": "x"}\n')
        code, _, err = run(capsys, "encode", "--notes", notes_path)
        assert code == 2
        assert "bad.jsonl:1" in err


class TestTranscribe:
    def test_oracle_closed_loop_is_perfect(self, capsys, song, tmp_path):
        est = str(tmp_path / "est.jsonl")
        code, out, _ = run(
            capsys, "transcribe", song + ".wav", "--provider", "oracle:" + song + ".jsonl",
            "--out", est, "--reference", song + ".jsonl", "--json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["n_notes"] == len(read_notes_jsonl(song + ".jsonl"))
        prf = payload["report"]["note_scores"]["onset+offset+pitch+value"]
        assert prf["f_measure"] == pytest.approx(1.0)

    def test_naive_provider_requires_beats(self, capsys, song, tmp_path):
        code, _, err = run(
            capsys, "transcribe", song + ".wav", "--provider", "naive",
            "--out", str(tmp_path / "est.jsonl"),
        )
        assert code == 1
        assert "--beats" in err

    def test_naive_provider_transcribes(self, capsys, song, tmp_path):
        est = str(tmp_path / "est.jsonl")
        code, out, _ = run(
            capsys, "transcribe", song + ".wav", "--provider", "naive",
            "--beats", song + ".beats", "--out", est, "--json",
        )
        assert code == 0
        assert json.loads(out)["n_notes"] > 0
        assert read_notes_jsonl(est)

    def test_score_output_files(self, capsys, song, tmp_path):
        est = str(tmp_path / "est.jsonl")
        code, _, _ = run(
            capsys, "transcribe", song + ".wav", "--provider", "oracle:" + song + ".jsonl",
            "--out", est, "--score-out",
        )
        assert code == 0
        assert (tmp_path / "est.musicxml").exists()
        assert (tmp_path / "est.score.json").exists()

    def test_bad_provider_spec_is_usage_error(self, capsys, song):
        for spec in ("magic", "oracle:", "external:nohost", "external:host:потрт"):
            code, _, err = run(capsys, "transcribe", song + ".wav", "--provider", spec)
            assert code == 1
            assert "provider" in err

    def test_unreachable_external_provider_is_exit_3(self, capsys, song, tmp_path):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        code, _, err = run(
            capsys, "transcribe", song + ".wav", "--provider",
            f"external:127.0.0.1:{port}", "--out", str(tmp_path / "est.jsonl"),
        )
        assert code == 3
        assert "provider error" in err

    def test_external_provider_end_to_end(self, capsys, song, tmp_path):
        reference = read_notes_jsonl(song + ".jsonl")
        server = serve_tcp(
            "127.0.0.1", 0, feature_oracle_scorer(reference, Vocabulary())
        )
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        est = str(tmp_path / "est.jsonl")
        try:
            host, port = server.server_address
            code, _, _ = run(
                capsys, "transcribe", song + ".wav", "--provider",
                f"external:{host}:{port}", "--out", est,
            )
        finally:
            server.shutdown()
            server.server_close()
        assert code == 0
        recovered = read_notes_jsonl(est)
        assert [(n.pitch, n.value) for n in recovered] == [
            (n.pitch, n.value) for n in reference
        ]
        for got, want in zip(recovered, reference):
            assert got.onset == pytest.approx(want.onset, abs=0.0051)

    def test_out_rejects_multiple_inputs(self, capsys, song, tmp_path):
        code, _, err = run(
            capsys, "transcribe", song + ".wav", song + ".wav",
            "--provider", "naive", "--out", str(tmp_path / "est.jsonl"),
        )
        assert code == 1
        assert "--out-dir" in err

    def test_parallel_songs_into_directory(self, capsys, song, tmp_path):
        import shutil

        second = str(tmp_path / "copy.wav")
        shutil.copyfile(song + ".wav", second)
        out_dir = str(tmp_path / "batch")
        code, out, _ = run(
            capsys, "transcribe", song + ".wav", second,
            "--provider", "oracle:" + song + ".jsonl",
            "--out-dir", out_dir, "--jobs", "2", "--json",
        )
        assert code == 0
        lines = [json.loads(line) for line in out.splitlines()]
        assert len(lines) == 2
        assert (tmp_path / "batch" / "tune.notes.jsonl").exists()
        assert (tmp_path / "batch" / "copy.notes.jsonl").exists()

    def test_missing_audio_is_exit_1(self, capsys, tmp_path, song):
        code, _, err = run(
            capsys, "transcribe", str(tmp_path / "ghost.wav"),
            "--provider", "oracle:" + song + ".jsonl",
        )
        assert code == 1

    def test_garbage_audio_is_a_data_error(self, capsys, tmp_path, song):
        bad = str(tmp_path / "noise.wav")
        open(bad, "w").write("definitely not audio")
        code, _, err = run(
            capsys, "transcribe", bad, "--provider", "oracle:" + song + ".jsonl"
        )
        assert code == 2


class TestScoreCmd:
    def test_writes_musicxml_and_timed_json(self, capsys, on_frame_file, tmp_path):
        base = str(tmp_path / "sheet")
        code, out, _ = run(capsys, "score", "--notes", on_frame_file, "--out", base)
        assert code == 0
        xml = open(base + ".musicxml").read()
        assert xml.startswith("<?xml")
        timed = json.loads(open(base + ".score.json").read())
        assert timed["symbols"]

    def test_json_reports_paths(self, capsys, on_frame_file, tmp_path):
        base = str(tmp_path / "sheet")
        code, out, _ = run(capsys, "score", "--notes", on_frame_file, "--out", base, "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["musicxml"].endswith(".musicxml")

    def test_unvalued_notes_are_a_data_error(self, capsys, tmp_path):
        notes_path = str(tmp_path / "unvalued.jsonl")
        write_notes_jsonl(notes_path, (NoteEvent(0.0, 0.5, 60),))
        code, _, err = run(
            capsys, "score", "--notes", notes_path, "--out", str(tmp_path / "x")
        )
        assert code == 2


class TestEvalCmd:
    def test_perfect_match_report(self, capsys, on_frame_file):
        code, out, _ = run(
            capsys, "eval", "--reference", on_frame_file, "--estimate", on_frame_file,
            "--json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["note_scores"]["onset+offset+pitch+value"]["f_measure"] == 1.0
        assert payload["error_rates"]["notes"]["note"] == 0.0

    def test_text_report_mentions_sections(self, capsys, on_frame_file):
        code, out, _ = run(
            capsys, "eval", "--reference", on_frame_file, "--estimate", on_frame_file
        )
        assert code == 0
        assert "onset+offset+pitch" in out

    def test_rest_aware_rates_with_score_files(self, capsys, on_frame_file, tmp_path):
        base = str(tmp_path / "sheet")
        run(capsys, "score", "--notes", on_frame_file, "--out", base)
        code, out, _ = run(
            capsys, "eval", "--reference", on_frame_file, "--estimate", on_frame_file,
            "--reference-score", base + ".score.json",
            "--estimate-score", base + ".score.json", "--json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["error_rates"]["notes_and_rests"]["note"] == 0.0

    def test_malformed_estimate_is_a_data_error(self, capsys, on_frame_file, tmp_path):
        bad = str(tmp_path / "bad.jsonl")
        open(bad, "w").write("{not json}\n")
        code, _, err = run(
            capsys, "eval", "--reference", on_frame_file, "--estimate", bad
        )
        assert code == 2
        assert "bad.jsonl:1" in err


class TestReportCmd:
    def test_text_and_svg(self, capsys, song, tmp_path):
        svg = str(tmp_path / "hist.svg")
        code, out, _ = run(
            capsys, "report", "--pseudo", song + ".jsonl", "--reference",
            song + ".jsonl", "--svg", svg,
        )
        assert code == 0
        assert "% exact values" in out
        assert open(svg).read().startswith("<svg")

    def test_json_payload(self, capsys, song):
        code, out, _ = run(
            capsys, "report", "--pseudo", song + ".jsonl", "--reference",
            song + ".jsonl", "--json",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["match_rate"] == 1.0
        assert payload["n"] > 0

    def test_length_mismatch_is_a_data_error(self, capsys, song, tmp_path):
        short = str(tmp_path / "short.jsonl")
        write_notes_jsonl(short, read_notes_jsonl(song + ".jsonl")[:2])
        code, _, _ = run(
            capsys, "report", "--pseudo", short, "--reference", song + ".jsonl"
        )
        assert code == 2


class TestConfigHandling:
    def test_invalid_geometry_is_a_config_error(self, capsys, song, tmp_path):
        cfg = str(tmp_path / "cfg.toml")
        open(cfg, "w").write("hop_seconds = 5.0\n")
        code, _, err = run(
            capsys, "encode", "--notes", song + ".jsonl", "--config", cfg
        )
        assert code == 1
        assert "config error" in err

    def test_unknown_setting_is_rejected(self, capsys, song, tmp_path):
        cfg = str(tmp_path / "cfg.toml")
        open(cfg, "w").write("banana = 1\n")
        code, _, err = run(
            capsys, "encode", "--notes", song + ".jsonl", "--config", cfg
        )
        assert code == 1
        assert "banana" in err

    def test_invalid_toml_is_rejected(self, capsys, song, tmp_path):
        cfg = str(tmp_path / "cfg.toml")
        open(cfg, "w").write("= nope\n")
        code, _, err = run(
            capsys, "encode", "--notes", song + ".jsonl", "--config", cfg
        )
        assert code == 1

    def test_wrong_type_is_rejected(self, capsys, song, tmp_path):
        cfg = str(tmp_path / "cfg.toml")
        open(cfg, "w").write("value_max = 1.5\n")
        code, _, err = run(
            capsys, "encode", "--notes", song + ".jsonl", "--config", cfg
        )
        assert code == 1
        assert "value_max" in err

    def test_config_limits_take_effect(self, capsys, tmp_path):
        notes_path = str(tmp_path / "big.jsonl")
        write_notes_jsonl(notes_path, (NoteEvent(0.0, 2.5, 60, 20),))
        cfg = str(tmp_path / "cfg.toml")
        open(cfg, "w").write("value_max = 8\n")
        ok_code, _, _ = run(capsys, "encode", "--notes", notes_path)
        small_code, _, _ = run(
            capsys, "encode", "--notes", notes_path, "--config", cfg
        )
        assert ok_code == 0
        assert small_code == 2  # value 20 does not fit an 8-step vocabulary

    def test_env_var_supplies_the_config(self, capsys, song, tmp_path, monkeypatch):
        cfg = str(tmp_path / "cfg.toml")
        open(cfg, "w").write("banana = 1\n")
        monkeypatch.setenv("MELSCORE_CONFIG", cfg)
        code, _, err = run(capsys, "encode", "--notes", song + ".jsonl")
        assert code == 1
        assert "banana" in err

    def test_flag_overrides_the_env_var(self, capsys, song, tmp_path, monkeypatch):
        bad = str(tmp_path / "bad.toml")
        open(bad, "w").write("banana = 1\n")
        good = str(tmp_path / "good.toml")
        open(good, "w").write("value_max = 16\n")
        monkeypatch.setenv("MELSCORE_CONFIG", bad)
        code, _, _ = run(
            capsys, "encode", "--notes", song + ".jsonl", "--config", good
        )
        assert code == 0

    def test_missing_config_file_is_exit_1(self, capsys, song, tmp_path):
        code, _, _ = run(
            capsys, "encode", "--notes", song + ".jsonl", "--config",
            str(tmp_path / "ghost.toml"),
        )
        assert code == 1


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        code, _, err = run(capsys)
        assert code == 1
        assert "error" in err

    def test_unknown_flag(self, capsys, song):
        code, _, _ = run(capsys, "encode", "--notes", song + ".jsonl", "--frobnicate")
        assert code == 1

    def test_jobs_must_be_positive(self, capsys, song):
        code, _, err = run(
            capsys, "transcribe", song + ".wav", "--provider", "naive",
            "--beats", song + ".beats", "--jobs", "0",
        )
        assert code == 1
        assert "--jobs" in err

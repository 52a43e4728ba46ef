"""Grammar-masked greedy decoding and overlapped-window stitching."""

import numpy as np
import pytest

import melscore as m
from melscore import TokenType

from conftest import adversarial_provider, random_grammar_walk

WINDOW = m.SegmentWindow(0.0, 5.12)


def state_after(vocab, *tokens):
    state = m.DecoderState(emitted=[vocab.SOS])
    for tok in tokens:
        state.advance(tok, vocab)
    return state


def legal_ids(vocab, state):
    return set(np.flatnonzero(m.legal_mask(state, vocab)).tolist())


def seeded_spread_notes(rng, n_notes=10, max_gap=100, max_length=350):
    """Monophonic valued on-grid melody long enough to straddle windows."""
    notes = []
    cur = int(rng.integers(0, 100))
    for i in range(n_notes):
        if i > 0:
            cur += int(rng.integers(0, max_gap + 1))
        length = int(rng.integers(1, max_length + 1))
        notes.append(
            m.NoteEvent(
                onset=cur * 0.01,
                offset=(cur + length) * 0.01,
                pitch=int(rng.integers(0, 128)),
                value=int(rng.integers(1, 33)),
            )
        )
        cur += length
    return tuple(notes)


class TestLegalMask:
    def test_fresh_state_allows_time_and_eos_only(self, vocab):
        legal = legal_ids(vocab, state_after(vocab))
        expected = {vocab.EOS} | {vocab.time_id(f) for f in range(513)}
        assert legal == expected

    def test_after_first_time_pitch_or_leading_value(self, vocab):
        legal = legal_ids(vocab, state_after(vocab, vocab.time_id(50)))
        expected = {vocab.pitch_id(p) for p in range(128)} | {
            vocab.value_id(v) for v in range(1, 33)
        }
        assert legal == expected

    def test_after_onset_pitch_offset_strictly_later(self, vocab):
        state = state_after(vocab, vocab.time_id(50), vocab.pitch_id(60))
        legal = legal_ids(vocab, state)
        assert vocab.time_id(50) not in legal
        assert vocab.time_id(51) in legal
        assert vocab.time_id(512) in legal
        assert vocab.EOS in legal
        assert vocab.pitch_id(60) not in legal

    def test_after_offset_time_value_only(self, vocab):
        state = state_after(
            vocab, vocab.time_id(50), vocab.pitch_id(60), vocab.time_id(80)
        )
        legal = legal_ids(vocab, state)
        assert legal == {vocab.value_id(v) for v in range(1, 33)}

    def test_after_complete_note_time_does_not_decrease(self, vocab):
        state = state_after(
            vocab,
            vocab.time_id(50),
            vocab.pitch_id(60),
            vocab.time_id(80),
            vocab.value_id(2),
        )
        legal = legal_ids(vocab, state)
        assert vocab.time_id(79) not in legal
        assert vocab.time_id(80) in legal
        assert vocab.EOS in legal

    def test_leading_value_pair_only_in_first_position(self, vocab):
        # after a first (Time, Value) leading fragment a second one is illegal
        state = state_after(vocab, vocab.time_id(10), vocab.value_id(4))
        legal = legal_ids(vocab, state)
        assert vocab.time_id(10) in legal and vocab.EOS in legal
        state.advance(vocab.time_id(20), vocab)
        legal = legal_ids(vocab, state)
        assert legal == {vocab.pitch_id(p) for p in range(128)}

    def test_onset_at_last_frame_leaves_only_eos(self, vocab):
        state = state_after(vocab, vocab.time_id(512), vocab.pitch_id(60))
        assert legal_ids(vocab, state) == {vocab.EOS}

    def test_after_eos_nothing_is_legal(self, vocab):
        state = state_after(vocab, vocab.EOS)
        assert not m.legal_mask(state, vocab).any()

    def test_pad_and_sos_never_legal(self, vocab):
        rng = np.random.default_rng(7)
        for _ in range(50):
            state = m.DecoderState(emitted=[vocab.SOS])
            for tok in random_grammar_walk(rng, vocab)[1:]:
                mask = m.legal_mask(state, vocab)
                assert not mask[vocab.PAD] and not mask[vocab.SOS]
                assert mask[tok]
                state.advance(tok, vocab)

    def test_every_unfinished_state_has_a_legal_token(self, vocab):
        rng = np.random.default_rng(11)
        for _ in range(100):
            state = m.DecoderState(emitted=[vocab.SOS])
            for tok in random_grammar_walk(rng, vocab)[1:]:
                assert m.legal_mask(state, vocab).any()
                state.advance(tok, vocab)


class TestDecode:
    def test_oracle_replay_is_exact(self, vocab):
        rng = np.random.default_rng(3)
        for _ in range(50):
            target = random_grammar_walk(rng, vocab)
            provider = m.oracle_provider(target, vocab)
            assert tuple(m.decode(provider, None, vocab)) == target

    def test_all_equal_scores_prefer_lowest_id(self, vocab):
        provider = lambda features, prefix: np.zeros(vocab.size)
        # EOS is the lowest legal id in the initial state
        assert m.decode(provider, None, vocab) == [vocab.SOS, vocab.EOS]

    def test_adversarial_output_detokenizes_with_zero_invalids(self, vocab):
        rng = np.random.default_rng(17)
        for _ in range(40):
            tokens = m.decode(adversarial_provider(rng), None, vocab)
            decoded = m.decode_tokens(tokens, WINDOW, vocab)
            assert decoded.invalid_count == 0

    @pytest.mark.parametrize("max_len", [2, 3, 5, 8, 21])
    def test_budget_truncation_never_strands_a_time_token(self, vocab, max_len):
        rng = np.random.default_rng(23)
        for _ in range(40):
            tokens = m.decode(adversarial_provider(rng), None, vocab, max_len=max_len)
            assert len(tokens) - 1 <= max_len
            last = vocab.kind_of(tokens[-1])
            assert last.type is not TokenType.TIME
            assert m.decode_tokens(tokens, WINDOW, vocab).invalid_count == 0

    def test_forced_prefix_replayed_verbatim(self, vocab):
        notes = (m.NoteEvent(0.5, 1.0, 60, 2), m.NoteEvent(2.0, 2.5, 64, 4))
        full = m.encode_segment(m.window_content(notes, WINDOW), vocab).ids
        forced = full[1:5]  # first note only, no SOS/EOS
        provider = m.oracle_provider(full, vocab)
        tokens = m.decode(provider, None, vocab, forced=forced)
        assert tuple(tokens) == full
        assert tokens[1:5] == list(forced)

    def test_forced_prefix_ending_with_eos_stops(self, vocab):
        tokens = m.decode(
            adversarial_provider(np.random.default_rng(0)),
            None,
            vocab,
            forced=(vocab.time_id(10), vocab.value_id(2), vocab.EOS),
        )
        assert tokens == [vocab.SOS, vocab.time_id(10), vocab.value_id(2), vocab.EOS]

    def test_illegal_forced_token_rejected(self, vocab):
        provider = m.oracle_provider((vocab.SOS, vocab.EOS), vocab)
        with pytest.raises(ValueError):
            m.decode(provider, None, vocab, forced=(vocab.pitch_id(60),))
        with pytest.raises(ValueError):
            m.decode(
                provider,
                None,
                vocab,
                forced=(vocab.time_id(50), vocab.pitch_id(60), vocab.time_id(50)),
            )

    def test_forced_longer_than_budget_rejected(self, vocab):
        provider = m.oracle_provider((vocab.SOS, vocab.EOS), vocab)
        with pytest.raises(ValueError):
            m.decode(provider, None, vocab, max_len=2, forced=(3, 4, 5))

    def test_provider_shape_errors_are_protocol_errors(self, vocab):
        bad_shape = lambda features, prefix: np.zeros(10)
        with pytest.raises(m.ProviderProtocolError):
            m.decode(bad_shape, None, vocab)

    def test_provider_nan_scores_are_protocol_errors(self, vocab):
        nans = lambda features, prefix: np.full(vocab.size, np.nan)
        with pytest.raises(m.ProviderProtocolError):
            m.decode(nans, None, vocab)


class TestNotesProviders:
    def test_single_window_oracle(self, vocab):
        notes = (m.NoteEvent(0.5, 1.0, 60, 2), m.NoteEvent(2.0, 2.5, 64, 4))
        provider = m.notes_to_provider(notes, WINDOW, vocab)
        tokens = m.decode(provider, None, vocab)
        decoded = m.decode_tokens(tokens, WINDOW, vocab)
        assert decoded.notes == notes

    def test_windowed_oracle_sees_each_window(self, vocab):
        notes = (m.NoteEvent(0.5, 1.0, 60, 2), m.NoteEvent(6.0, 6.5, 64, 4))
        provider = m.notes_oracle_provider(notes, vocab)
        features = m.WindowFeatures(duration=9.0)
        for start in (0.0, 2.56):
            window = m.SegmentWindow(start, 5.12)
            tokens = m.decode(provider, features.segment(window), vocab)
            expected = m.encode_segment(m.window_content(notes, window), vocab).ids
            assert tuple(tokens) == expected


class TestStitch:
    def test_identity_on_seeded_melodies(self, vocab):
        for seed in range(8):
            rng = np.random.default_rng(seed)
            notes = seeded_spread_notes(rng)
            provider = m.notes_oracle_provider(notes, vocab)
            duration = notes[-1].offset + 0.5
            out = m.stitch(provider, m.WindowFeatures(duration), vocab)
            assert len(out) == len(notes), f"seed {seed}"
            for got, want in zip(out, notes):
                assert got.pitch == want.pitch and got.value == want.value
                assert got.onset == pytest.approx(want.onset, abs=1e-6)
                assert got.offset == pytest.approx(want.offset, abs=1e-6)

    def test_note_straddling_window_boundary_is_rejoined(self, vocab):
        # one note spans the first window's acceptance boundary at 3.84 s
        notes = (
            m.NoteEvent(0.5, 1.0, 60, 2),
            m.NoteEvent(3.5, 4.5, 64, 8),
            m.NoteEvent(5.0, 5.5, 67, 2),
        )
        provider = m.notes_oracle_provider(notes, vocab)
        out = m.stitch(provider, m.WindowFeatures(6.0), vocab)
        assert out == notes

    def test_note_longer_than_a_window_survives(self, vocab):
        notes = (
            m.NoteEvent(1.0, 7.5, 60, 32),
            m.NoteEvent(8.0, 8.5, 64, 2),
        )
        provider = m.notes_oracle_provider(notes, vocab)
        out = m.stitch(provider, m.WindowFeatures(9.0), vocab)
        assert len(out) == 2
        assert out[0].onset == pytest.approx(1.0, abs=1e-6)
        assert out[0].offset == pytest.approx(7.5, abs=1e-6)
        assert out[0].pitch == 60 and out[0].value == 32

    def test_empty_recording(self, vocab):
        provider = m.notes_oracle_provider((), vocab)
        assert m.stitch(provider, m.WindowFeatures(10.0), vocab) == ()

    def test_short_recording_single_window(self, vocab):
        notes = (m.NoteEvent(0.5, 1.0, 60, 2),)
        provider = m.notes_oracle_provider(notes, vocab)
        out = m.stitch(provider, m.WindowFeatures(3.0), vocab)
        assert out == notes

    def test_output_is_monophonic(self, vocab):
        for seed in range(4):
            rng = np.random.default_rng(100 + seed)
            notes = seeded_spread_notes(rng, n_notes=14, max_gap=10)
            provider = m.notes_oracle_provider(notes, vocab)
            out = m.stitch(provider, m.WindowFeatures(notes[-1].offset), vocab)
            assert m.validate_sequence(out) == []

    def test_rejects_bad_geometry(self, vocab):
        provider = m.notes_oracle_provider((), vocab)
        with pytest.raises(ValueError):
            m.stitch(
                provider,
                m.WindowFeatures(10.0),
                vocab,
                segment_seconds=5.12,
                hop_seconds=4.0,
                discard_seconds=2.0,
            )
        with pytest.raises(ValueError):
            m.stitch(provider, m.WindowFeatures(10.0), vocab, hop_seconds=0.0)

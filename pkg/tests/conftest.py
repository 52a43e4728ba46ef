"""Shared fixtures and data generators for the test suite."""

import numpy as np
import pytest
from hypothesis import strategies as st

import melscore as m


@pytest.fixture(scope="session")
def vocab() -> m.Vocabulary:
    return m.Vocabulary()


@st.composite
def on_frame_notes(draw, max_notes: int = 7, allow_zero_gap: bool = True):
    """Monophonic valued sequences on the 10 ms frame grid inside [0, 5.12)."""
    n = draw(st.integers(min_value=0, max_value=max_notes))
    notes = []
    cur = draw(st.integers(0, 40))
    for i in range(n):
        if i > 0:
            cur += draw(st.integers(0 if allow_zero_gap else 1, 25))
        length = draw(st.integers(1, 40))
        notes.append(
            m.NoteEvent(
                onset=cur * 0.01,
                offset=(cur + length) * 0.01,
                pitch=draw(st.integers(0, 127)),
                value=draw(st.integers(1, 32)),
            )
        )
        cur += length
    return tuple(notes)


def random_frame_notes(
    rng: np.random.Generator,
    max_notes: int = 7,
    n_frames: int = 512,
    frame_period: float = 0.01,
) -> tuple:
    """Non-hypothesis twin of on_frame_notes for seeded bulk runs."""
    n = int(rng.integers(0, max_notes + 1))
    notes = []
    cur = int(rng.integers(0, 41))
    for i in range(n):
        if i > 0:
            cur += int(rng.integers(0, 26))
        length = int(rng.integers(1, 41))
        if cur + length > n_frames:
            break
        notes.append(
            m.NoteEvent(
                onset=cur * frame_period,
                offset=(cur + length) * frame_period,
                pitch=int(rng.integers(0, 128)),
                value=int(rng.integers(1, 33)),
            )
        )
        cur += length
    return tuple(notes)


def random_grammar_walk(
    rng: np.random.Generator, vocab: m.Vocabulary, max_steps: int = 40
) -> tuple:
    """A grammar-valid token sequence built by walking the legal mask."""
    state = m.DecoderState(emitted=[vocab.SOS])
    out = [vocab.SOS]
    for _ in range(max_steps - 1):
        mask = m.legal_mask(state, vocab)
        choices = np.flatnonzero(mask)
        token = int(rng.choice(choices))
        out.append(token)
        state.advance(token, vocab)
        if state.finished:
            return tuple(out)
    mask = m.legal_mask(state, vocab)
    if mask[vocab.EOS]:
        out.append(vocab.EOS)
        state.advance(vocab.EOS, vocab)
    else:
        # one more token always reaches a state where EOS is legal
        choices = np.flatnonzero(mask)
        token = int(rng.choice(choices))
        out.append(token)
        state.advance(token, vocab)
        out.append(vocab.EOS)
    return tuple(out)


def adversarial_provider(rng: np.random.Generator, size: int = 676):
    """Provider returning unconstrained random scores every step."""

    def provide(features, prefix):
        return rng.standard_normal(size)

    return provide

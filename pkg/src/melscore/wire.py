"""Newline-delimited JSON protocol for out-of-process score providers.

A client sends one JSON object per line: either a registration
{"register": {"features_ref": str, "path": str}} (no reply) announcing a
feature file, or a scoring request {"request_id": int, "features_ref": str,
"prefix": [int, ...]} answered by {"request_id": int, "scores": [float x
vocabulary size]}. The transport is any pair of text streams — a socket,
or a subprocess's stdin/stdout.
"""

import io
import json
import os
import socket
import socketserver
from typing import Callable, Sequence

import numpy as np

from .audio import Spectrogram, read_features, write_features
from .codec import encode_segment, window_content
from .decoding import ProviderProtocolError
from .notes import NoteEvent, SegmentWindow
from .vocab import Vocabulary


class WireProvider:
    """Score provider backed by a remote server speaking the line protocol.

    The decode-side features argument is the features_ref string naming a
    previously registered feature file.
    """

    def __init__(self, reader, writer, vocab: Vocabulary):
        self._reader = reader
        self._writer = writer
        self._vocab = vocab
        self._next_id = 0
        self._socket: socket.socket | None = None

    @classmethod
    def connect(cls, host: str, port: int, vocab: Vocabulary) -> "WireProvider":
        sock = socket.create_connection((host, port))
        provider = cls(
            sock.makefile("r", encoding="utf-8"),
            sock.makefile("w", encoding="utf-8"),
            vocab,
        )
        provider._socket = sock
        return provider

    def close(self) -> None:
        for stream in (self._reader, self._writer, self._socket):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass

    def __enter__(self) -> "WireProvider":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _send(self, message: dict) -> None:
        try:
            self._writer.write(json.dumps(message) + "\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise ProviderProtocolError(f"provider connection lost: {exc}") from exc

    def register(self, features_ref: str, path: str) -> None:
        self._send({"register": {"features_ref": features_ref, "path": path}})

    def __call__(self, features_ref: str, prefix: Sequence[int]) -> np.ndarray:
        request_id = self._next_id
        self._next_id += 1
        self._send(
            {
                "request_id": request_id,
                "features_ref": features_ref,
                "prefix": [int(t) for t in prefix],
            }
        )
        line = self._reader.readline()
        if not line:
            raise ProviderProtocolError("provider closed the connection")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderProtocolError(f"provider sent invalid JSON: {exc}") from exc
        if not isinstance(message, dict) or message.get("request_id") != request_id:
            answered = message.get("request_id") if isinstance(message, dict) else message
            raise ProviderProtocolError(
                f"provider answered request {answered!r}, expected {request_id}"
            )
        scores = message.get("scores")
        if not isinstance(scores, list) or len(scores) != self._vocab.size:
            raise ProviderProtocolError(
                f"provider must return {self._vocab.size} scores"
            )
        try:
            return np.asarray(scores, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ProviderProtocolError(f"non-numeric scores: {exc}") from exc


Scorer = Callable[[str, "str | None", Sequence[int]], Sequence[float]]
"""Server-side scoring hook: (features_ref, registered path, prefix) -> scores."""


def serve_connection(reader, writer, scorer: Scorer) -> None:
    """Answer one client's messages until it disconnects.

    Registration messages update this connection's feature registry;
    requests are delegated to the scorer. Malformed input ends the session
    with ValueError, which drops the connection.
    """
    registry: dict[str, str] = {}
    for line in reader:
        text = line.strip()
        if not text:
            continue
        message = json.loads(text)
        if not isinstance(message, dict):
            raise ValueError("protocol messages must be JSON objects")
        if "register" in message:
            registration = message["register"]
            registry[str(registration["features_ref"])] = str(registration["path"])
            continue
        request_id = message["request_id"]
        ref = str(message["features_ref"])
        prefix = message["prefix"]
        scores = scorer(ref, registry.get(ref), prefix)
        writer.write(
            json.dumps(
                {"request_id": request_id, "scores": [float(s) for s in scores]}
            )
            + "\n"
        )
        writer.flush()


def serve_tcp(host: str, port: int, scorer: Scorer) -> socketserver.ThreadingTCPServer:
    """TCP server for the provider protocol; one session per connection.

    Returns the (not yet running) server; call serve_forever(), and
    shutdown() to stop. Port 0 picks a free port (see server_address).
    """

    class Handler(socketserver.StreamRequestHandler):
        def handle(self) -> None:
            reader = io.TextIOWrapper(self.rfile, encoding="utf-8")
            writer = io.TextIOWrapper(self.wfile, encoding="utf-8")
            try:
                serve_connection(reader, writer, scorer)
            except (ValueError, KeyError, OSError):
                pass  # malformed traffic or sudden disconnect: drop session
            finally:
                writer.flush()

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    return Server((host, port), Handler)


def feature_oracle_scorer(notes: Sequence[NoteEvent], vocab: Vocabulary) -> Scorer:
    """Scorer that replays the encoding of known notes for each window.

    The window is recovered from the registered feature file's header
    (start and frame count), so it works unchanged under stitched decoding.
    """
    fixed = tuple(notes)
    targets: dict[str, tuple[int, ...]] = {}

    def score(ref: str, path: str | None, prefix: Sequence[int]) -> Sequence[float]:
        target = targets.get(ref)
        if target is None:
            if path is None:
                raise ValueError(f"features_ref {ref!r} was never registered")
            spec = read_features(path)
            window = SegmentWindow(spec.start, spec.duration)
            target = encode_segment(window_content(fixed, window), vocab).ids
            targets[ref] = target
        out = [0.0] * vocab.size
        i = len(prefix)
        out[target[i] if i < len(target) else vocab.EOS] = 1.0
        return out

    return score


class RegisteredSegmentSource:
    """FeatureSource that ships each window's features to a WireProvider.

    segment() writes the window's spectrogram slice to a file in
    `directory`, registers it under a ref naming the window, and returns
    that ref — the features argument WireProvider expects.
    """

    def __init__(self, spec: Spectrogram, provider: WireProvider, directory: str):
        self._spec = spec
        self._provider = provider
        self._directory = directory
        self._sent: set[str] = set()

    @property
    def duration(self) -> float:
        return self._spec.duration

    def segment(self, window: SegmentWindow) -> str:
        ref = f"seg@{window.start:.3f}+{window.length:.3f}"
        if ref not in self._sent:
            filename = ref.replace("@", "_").replace("+", "_") + ".f32"
            path = os.path.join(self._directory, filename)
            write_features(path, self._spec.segment(window))
            self._provider.register(ref, path)
            self._sent.add(ref)
        return ref

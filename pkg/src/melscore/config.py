"""Run configuration: inference windowing, codec geometry, and tolerances.

Defaults are the standard operating point (5.12 s segments, 2.56 s hop,
1.28 s discard, 10 ms frames, values up to 32 sixteenths, 16 kHz audio).
A TOML file of field = value pairs can override any of them; the
MELSCORE_CONFIG environment variable supplies a default file path.
"""

import dataclasses
import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .metrics import MatchCriteria
from .vocab import Vocabulary

ENV_CONFIG_PATH = "MELSCORE_CONFIG"


class ConfigError(Exception):
    """A configuration file or override that cannot be used."""


@dataclass(frozen=True)
class RunConfig:
    segment_seconds: float = 5.12
    hop_seconds: float = 2.56
    discard_seconds: float = 1.28
    frame_period: float = 0.01
    value_max: int = 32
    max_output_len: int = 512
    sample_rate: int = 16_000
    onset_tolerance: float = 0.05
    offset_min_tolerance: float = 0.05
    offset_duration_ratio: float = 0.2
    pitch_tolerance_cents: float = 50.0

    def __post_init__(self) -> None:
        if self.segment_seconds <= 0 or self.hop_seconds <= 0 or self.frame_period <= 0:
            raise ConfigError("segment, hop, and frame period must be positive")
        if self.discard_seconds < 0:
            raise ConfigError("discard length cannot be negative")
        if self.hop_seconds + self.discard_seconds > self.segment_seconds + 1e-9:
            raise ConfigError("hop + discard must not exceed the segment length")
        for name in ("segment_seconds", "hop_seconds", "discard_seconds"):
            seconds = getattr(self, name)
            frames = seconds / self.frame_period
            if abs(frames - round(frames)) > 1e-6:
                raise ConfigError(
                    f"{name} = {seconds} is not a whole number of "
                    f"{self.frame_period} s frames"
                )
        if not 1 <= self.value_max <= 32:
            raise ConfigError("value_max must lie in [1, 32]")
        if self.max_output_len < 2:
            raise ConfigError("max_output_len must allow at least one token pair")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(
            segment_seconds=self.segment_seconds,
            frame_period=self.frame_period,
            value_max=self.value_max,
        )

    def criteria(self, **flags: bool) -> MatchCriteria:
        """MatchCriteria with this config's tolerances; flags pick attributes."""
        return MatchCriteria(
            onset_tolerance=self.onset_tolerance,
            offset_min_tolerance=self.offset_min_tolerance,
            offset_duration_ratio=self.offset_duration_ratio,
            pitch_tolerance_cents=self.pitch_tolerance_cents,
            **flags,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerced(name: str, value) -> object:
    kind = _FIELDS[name].type
    if not isinstance(kind, str):
        kind = kind.__name__
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    raise ConfigError(f"{name} cannot be set from a config file")


def load_config(path: str | None = None) -> RunConfig:
    """Build a RunConfig from a TOML file, the environment default, or
    built-in defaults when neither is given."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH) or None
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown settings: {', '.join(unknown)}")
    values = {name: _coerced(name, value) for name, value in data.items()}
    return RunConfig(**values)


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Replace any non-None keyword fields on a copy of the config."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    bad = sorted(set(changes) - set(_FIELDS))
    if bad:
        raise ConfigError(f"unknown settings: {', '.join(bad)}")
    return dataclasses.replace(config, **changes) if changes else config

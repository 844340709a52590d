"""Flat ``key = value`` configuration with a fixed schema.

A config file is UTF-8 text, one assignment per line; blank lines and
``#`` comments are ignored.  Unknown keys are rejected, as are values
that fail the per-key validation below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ConfigError


@dataclass(frozen=True)
class _Key:
    default: Any
    parse: Callable[[str], Any]
    check: Callable[[Any], bool]
    doc: str


def _choice(*options: str) -> Callable[[Any], bool]:
    return lambda v: v in options


_SCHEMA: dict[str, _Key] = {
    "seed": _Key(0, int, lambda v: v >= 0, "global RNG seed"),
    "lr0": _Key(1e-3, float, lambda v: v > 0, "initial Adam learning rate"),
    "decay": _Key(0.75, float, lambda v: 0 < v < 1, "LR decay factor on validation plateau"),
    "patience": _Key(3, int, lambda v: v >= 1, "stagnant epochs before an LR decay"),
    "batch": _Key(4, int, lambda v: v >= 1, "utterances per optimizer step"),
    "epochs_max": _Key(20, int, lambda v: v >= 1, "training epoch limit"),
    "w_sisnr": _Key(1.0, float, lambda v: v >= 0, "weight of the SI-SNR loss term"),
    "w_perc": _Key(0.2, float, lambda v: v >= 0, "weight of the perceptual loss term"),
    "perc_bands": _Key(24, int, lambda v: v >= 2, "bark bands in the perceptual loss"),
    "pem.kind": _Key("crn", str, _choice("mask", "crn"), "pre-enhancement variant"),
    "pem.width": _Key(1, int, lambda v: v >= 1, "channel/width multiplier (1 = base preset)"),
    "mri.n_refinements": _Key(3, int, lambda v: 0 <= v <= 8, "number of refinement iterations"),
    "mri.channels": _Key(14, int, lambda v: v >= 1, "channels of the underlying-information flow"),
    "uie.pitch_min": _Key(50.0, float, lambda v: 50.0 <= v <= 500.0, "lowest pitch candidate (Hz)"),
    "uie.pitch_max": _Key(500.0, float, lambda v: 50.0 <= v <= 500.0, "highest pitch candidate (Hz)"),
    "uie.pitch_bins": _Key(64, int, lambda v: v >= 1, "number of pitch candidates"),
    "uie.kmax": _Key(16, int, lambda v: v >= 1, "harmonics per comb template"),
    "uie.temperature": _Key(0.1, float, lambda v: v > 0, "softmax temperature of the pitch attention"),
    "stft.hop": _Key(384, int, lambda v: 0 < v < 512, "analysis hop in samples"),
}


@dataclass
class Config:
    """Validated configuration; starts from schema defaults."""

    values: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        merged = {k: spec.default for k, spec in _SCHEMA.items()}
        for k, v in self.values.items():
            if k not in _SCHEMA:
                raise ConfigError(f"unknown config key: {k!r}")
            merged[k] = v
        self.values = merged
        self._validate()

    def _validate(self) -> None:
        for k, v in self.values.items():
            spec = _SCHEMA[k]
            if not isinstance(v, type(spec.default)) and not (
                isinstance(spec.default, float) and isinstance(v, int)
            ):
                raise ConfigError(f"config key {k!r}: expected {type(spec.default).__name__}, got {v!r}")
            if not spec.check(v):
                raise ConfigError(f"config key {k!r}: invalid value {v!r}")
        if self.values["uie.pitch_min"] >= self.values["uie.pitch_max"]:
            raise ConfigError("uie.pitch_min must be below uie.pitch_max")

    def __getitem__(self, key: str) -> Any:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key: {key!r}")
        return self.values[key]

    def replaced(self, **dotted: Any) -> "Config":
        """New Config with keys overridden; underscores map to dots."""
        new = dict(self.values)
        for k, v in dotted.items():
            new[k.replace("__", ".")] = v
        return Config(new)

    def to_dict(self) -> dict[str, Any]:
        return dict(self.values)


def parse_value(key: str, raw: str) -> Any:
    """Parse one raw string value according to the schema."""
    if key not in _SCHEMA:
        raise ConfigError(f"unknown config key: {key!r}")
    try:
        return _SCHEMA[key].parse(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc


def load_config(path: str) -> Config:
    """Read a flat ``key = value`` file into a validated Config."""
    values: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            values[key] = parse_value(key, raw)
    return Config(values)


def apply_overrides(cfg: Config, overrides: list[str]) -> Config:
    """Apply repeatable ``--set key=value`` strings to an existing Config."""
    values = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        values[key] = parse_value(key, raw)
    return Config(values)


def default_config() -> Config:
    return Config({})


def describe_schema() -> str:
    """Human-readable key table for --help and startup banners."""
    lines = []
    for k, spec in _SCHEMA.items():
        lines.append(f"{k} = {spec.default!r}  # {spec.doc}")
    return "\n".join(lines)

"""Exception types shared across the package.

Every error raised by the public API derives from RuiError so the CLI can
map failures to a single runtime exit code.
"""


class RuiError(Exception):
    """Base class for all package errors."""


class FormatError(RuiError):
    """Unsupported or malformed file content (WAV codec, checkpoint, ...)."""


class SampleRateError(RuiError):
    """Audio sample rate other than the 16 kHz the pipeline requires."""


class LengthError(RuiError):
    """Signal too short for the requested analysis."""


class ShapeError(RuiError):
    """Array shape inconsistent with the operation's contract."""


class EnergyError(RuiError):
    """Silent signal where nonzero energy is required."""


class ReferenceError_(RuiError):
    """Zero reference signal passed to a reference-relative metric."""


class ConfigError(RuiError):
    """Invalid configuration key or value."""


class InventoryError(RuiError):
    """Missing or empty data inventory (directories, manifest rows)."""


class NanError(RuiError):
    """Non-finite value produced where finiteness is guaranteed."""


class AuditError(RuiError):
    """Refinement ledger failed an information-flow identity check."""


class WriteError(RuiError):
    """Failed to write an output artifact."""

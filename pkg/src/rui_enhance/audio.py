"""Waveform container and WAV file I/O.

The pipeline runs exclusively at 16 kHz; files at any other rate are
rejected rather than resampled.  Output is always mono IEEE float-32 so
that save -> load round trips are bit-exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import FormatError, SampleRateError, WriteError

PIPELINE_RATE_HZ = 16000
_AMPLITUDE_TOL = 1.0 + 1e-6


@dataclass
class AudioClip:
    """Mono waveform with its sample rate.

    samples are dimensionless amplitudes in [-1, 1] (a small tolerance is
    allowed); they are stored as float64 for downstream precision.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise FormatError(f"AudioClip expects 1-D samples, got shape {self.samples.shape}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise FormatError("AudioClip samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise FormatError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def __len__(self) -> int:
        return self.samples.size


def load_wav(path: str) -> AudioClip:
    """Load a RIFF/WAVE file as a mono 16 kHz AudioClip.

    PCM 16-bit samples are scaled by 1/32768; IEEE float-32 is taken
    as-is.  Multichannel content is downmixed by the channel mean.  If
    the downmixed peak exceeds 1, the clip is normalized down to peak 1.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if rate != PIPELINE_RATE_HZ:
        raise SampleRateError(f"{path}: sample rate {rate}, pipeline requires {PIPELINE_RATE_HZ}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported codec (dtype {data.dtype}); use PCM16 or float-32")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    elif samples.ndim > 2:
        raise FormatError(f"{path}: unexpected sample array shape {samples.shape}")
    if samples.size and not np.all(np.isfinite(samples)):
        raise FormatError(f"{path}: non-finite samples")
    peak = np.abs(samples).max() if samples.size else 0.0
    if peak > _AMPLITUDE_TOL:
        samples = samples / peak
    return AudioClip(samples, rate)


def save_wav(clip: AudioClip, path: str) -> None:
    """Write a clip as mono IEEE float-32 WAV."""
    payload = np.asarray(clip.samples, dtype=np.float32)
    try:
        parent = os.path.dirname(os.path.abspath(path))
        if parent and not os.path.isdir(parent):
            raise WriteError(f"{path}: directory does not exist")
        wavfile.write(path, clip.sample_rate_hz, payload)
    except WriteError:
        raise
    except OSError as exc:
        raise WriteError(f"{path}: {exc}") from exc

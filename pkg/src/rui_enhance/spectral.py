"""Short-time Fourier analysis/synthesis and spectrogram export.

Analysis uses a 32 ms (512-sample) Hann window with a 384-sample hop
(25% window overlap) and a 512-point FFT, one-sided.  Frames are
left-aligned with no center padding, so the frame count is the closed
form T = 1 + floor((len - 512) / hop).

Synthesis is weighted overlap-add with the same Hann window and
squared-window normalization: exact wherever the normalizer is bounded
away from zero, which at this hop is everything but the first and last
partial window.  The hop is a config key so the 75%-overlap alternative
(hop = 128) runs through the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .audio import AudioClip
from .errors import LengthError, ShapeError, WriteError

WINDOW_LEN = 512
DEFAULT_HOP = 384
FFT_SIZE = 512
N_BINS = FFT_SIZE // 2 + 1

_DB_FLOOR = -80.0
_MAG_EPS = 1e-10
_WOLA_EPS = 1e-8


def hann_window(n: int = WINDOW_LEN) -> np.ndarray:
    """Periodic Hann window w[k] = 0.5 - 0.5 cos(2 pi k / n)."""
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


@dataclass(frozen=True)
class StftConfig:
    window_len: int = WINDOW_LEN
    hop: int = DEFAULT_HOP
    fft_size: int = FFT_SIZE
    window: np.ndarray = field(default_factory=hann_window)

    def __post_init__(self) -> None:
        if self.window_len != self.fft_size or self.window_len != WINDOW_LEN:
            raise ShapeError("window_len and fft_size are fixed at 512")
        if not (0 < self.hop < self.window_len):
            raise ShapeError(f"hop must lie in (0, {self.window_len}), got {self.hop}")
        if self.window.shape != (self.window_len,):
            raise ShapeError("window length must equal window_len")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            raise LengthError(
                f"signal of {n_samples} samples is shorter than one {self.window_len}-sample window"
            )
        return 1 + (n_samples - self.window_len) // self.hop

    def covered_length(self, frames: int) -> int:
        return (frames - 1) * self.hop + self.window_len


@dataclass
class ComplexSpectrum:
    """T x 2F real container: real plane (T x F) then imaginary plane (T x F)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] % 2 != 0:
            raise ShapeError(f"spectrum data must be T x 2F, got {self.data.shape}")
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise ShapeError("spectrum values must be finite")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1] // 2

    @property
    def real(self) -> np.ndarray:
        return self.data[:, : self.bins]

    @property
    def imag(self) -> np.ndarray:
        return self.data[:, self.bins :]

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    def magnitude(self) -> np.ndarray:
        return np.abs(self.to_complex())

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexSpectrum":
        z = np.asarray(z)
        return cls(np.concatenate([z.real, z.imag], axis=1))


def _frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    frames = cfg.frame_count(x.size)
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(frames)[:, None]
    return x[idx]


def stft(clip: AudioClip, cfg: StftConfig | None = None) -> ComplexSpectrum:
    """One-sided STFT of a clip; frame t covers samples [t*hop, t*hop + 512)."""
    cfg = cfg or StftConfig()
    frames = _frame_signal(np.asarray(clip.samples, dtype=np.float64), cfg)
    spec = np.fft.rfft(frames * cfg.window[None, :], n=cfg.fft_size, axis=1)
    return ComplexSpectrum.from_complex(spec)


def wola_normalizer(cfg: StftConfig, frames: int, out_len: int) -> np.ndarray:
    """Sum over frames of the squared synthesis window at each sample."""
    norm = np.zeros(max(out_len, cfg.covered_length(frames)), dtype=np.float64)
    w2 = cfg.window.astype(np.float64) ** 2
    for t in range(frames):
        norm[t * cfg.hop : t * cfg.hop + cfg.window_len] += w2
    return norm[:out_len]


def istft(spec: ComplexSpectrum, cfg: StftConfig | None = None, out_len: int | None = None) -> AudioClip:
    """Weighted overlap-add inverse with squared-window normalization.

    Samples whose window-power sum falls below 1e-8 are set to zero; the
    result is truncated or zero-padded to out_len.
    """
    cfg = cfg or StftConfig()
    if spec.bins != cfg.n_bins:
        raise ShapeError(f"spectrum has {spec.bins} bins, config expects {cfg.n_bins}")
    frames = spec.frames
    if out_len is None:
        out_len = cfg.covered_length(frames)
    total = cfg.covered_length(frames)
    acc = np.zeros(total, dtype=np.float64)
    segments = np.fft.irfft(spec.to_complex(), n=cfg.fft_size, axis=1) * cfg.window[None, :]
    for t in range(frames):
        acc[t * cfg.hop : t * cfg.hop + cfg.window_len] += segments[t]
    norm = wola_normalizer(cfg, frames, total)
    ok = norm >= _WOLA_EPS
    out = np.zeros(total, dtype=np.float64)
    out[ok] = acc[ok] / norm[ok]
    if out_len <= total:
        out = out[:out_len]
    else:
        out = np.concatenate([out, np.zeros(out_len - total)])
    from .audio import PIPELINE_RATE_HZ

    return AudioClip(out, PIPELINE_RATE_HZ)


def interior_slice(cfg: StftConfig, frames: int) -> slice:
    """Sample range with full window coverage, for round-trip comparisons."""
    return slice(cfg.window_len, cfg.covered_length(frames) - cfg.window_len)


def export_spectrogram(spec: ComplexSpectrum, path: str) -> None:
    """Write a grayscale PGM: F rows (low frequency at bottom) x T columns.

    Pixel value maps 20*log10(|X| + 1e-10), clamped to [-80, 0] dB,
    linearly onto [0, 255].
    """
    db = 20.0 * np.log10(spec.magnitude() + _MAG_EPS)
    db = np.clip(db, _DB_FLOOR, 0.0)
    px = np.rint((db - _DB_FLOOR) / (-_DB_FLOOR) * 255.0).astype(np.uint8)
    img = px.T[::-1, :]  # rows = bins, top row = highest frequency
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(img.tobytes())
    except OSError as exc:
        raise WriteError(f"{path}: {exc}") from exc


def read_pgm(path: str) -> np.ndarray:
    """Read back a binary PGM written by export_spectrogram (test support)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise WriteError(f"{path}: not a binary PGM")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise WriteError(f"{path}: unexpected maxval {maxval}")
        raw = fh.read(width * height)
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


# ---------------------------------------------------------------------------
# torch twins used inside the training graph; they mirror the numpy path
# exactly (same framing, window, and normalizer).


def stft_torch(x: torch.Tensor, cfg: StftConfig | None = None) -> torch.Tensor:
    """STFT of (B, L) waveforms -> (B, T, 2F) planes on the autograd graph."""
    cfg = cfg or StftConfig()
    if x.dim() != 2:
        raise ShapeError(f"expected (batch, samples), got {tuple(x.shape)}")
    frames = cfg.frame_count(x.shape[1])
    window = torch.as_tensor(cfg.window, dtype=x.dtype, device=x.device)
    covered = cfg.covered_length(frames)
    framed = x[:, :covered].unfold(1, cfg.window_len, cfg.hop) * window
    spec = torch.fft.rfft(framed, n=cfg.fft_size, dim=2)
    return torch.cat([spec.real, spec.imag], dim=2)


def istft_torch(planes: torch.Tensor, cfg: StftConfig | None = None, out_len: int | None = None) -> torch.Tensor:
    """Inverse of stft_torch for (B, T, 2F) planes -> (B, out_len) waveforms."""
    cfg = cfg or StftConfig()
    if planes.dim() != 3 or planes.shape[2] != 2 * cfg.n_bins:
        raise ShapeError(f"expected (batch, frames, {2 * cfg.n_bins}), got {tuple(planes.shape)}")
    frames = planes.shape[1]
    total = cfg.covered_length(frames)
    if out_len is None:
        out_len = total
    z = torch.complex(planes[:, :, : cfg.n_bins], planes[:, :, cfg.n_bins :])
    window = torch.as_tensor(cfg.window, dtype=planes.dtype, device=planes.device)
    segments = torch.fft.irfft(z, n=cfg.fft_size, dim=2) * window
    # fold frames back by overlap-add
    acc = torch.zeros(planes.shape[0], total, dtype=planes.dtype, device=planes.device)
    idx = (
        torch.arange(cfg.window_len, device=planes.device)[None, :]
        + cfg.hop * torch.arange(frames, device=planes.device)[:, None]
    ).reshape(-1)
    acc = acc.index_add(1, idx, segments.reshape(planes.shape[0], -1))
    norm = torch.as_tensor(wola_normalizer(cfg, frames, total), dtype=planes.dtype, device=planes.device)
    out = torch.where(norm >= _WOLA_EPS, acc / torch.clamp(norm, min=_WOLA_EPS), torch.zeros_like(acc))
    if out_len <= total:
        return out[:, :out_len]
    pad = torch.zeros(planes.shape[0], out_len - total, dtype=planes.dtype, device=planes.device)
    return torch.cat([out, pad], dim=1)

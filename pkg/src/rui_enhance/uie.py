"""Harmonic attention: comb-pitch templates and the underlying-information flow.

A bank of comb templates (one per candidate fundamental) is correlated
with the magnitude spectrum frame by frame; a softmax over candidates
turns the salience into attention weights, whose convex combination of
templates forms a harmonic map that is projected, together with the real
and imaginary planes, to the C-channel flow consumed by the refinements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import Config
from .errors import ConfigError, ShapeError
from .spectral import N_BINS

_SALIENCE_EPS = 1e-12


@dataclass
class CombPitchMatrix:
    """P x F nonnegative harmonic templates, rows L1-normalized."""

    weights: np.ndarray
    pitch_grid: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.pitch_grid = np.asarray(self.pitch_grid, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.pitch_grid.size:
            raise ShapeError("comb matrix rows must match the pitch grid")

    @property
    def n_pitches(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def build_comb_matrix(
    pitch_grid: np.ndarray,
    n_bins: int = N_BINS,
    sample_rate_hz: int = 16000,
    fft_size: int = 512,
    k_max: int = 16,
) -> CombPitchMatrix:
    """Comb template per candidate pitch.

    Each harmonic k*f0 below Nyquist places a unit-peak triangular weight
    at its fractional bin, split linearly across the two adjacent integer
    bins; rows are then L1-normalized.
    """
    pitch_grid = np.asarray(pitch_grid, dtype=np.float64)
    if pitch_grid.size == 0:
        raise ConfigError("pitch grid is empty")
    if np.any(np.diff(pitch_grid) <= 0):
        raise ConfigError("pitch grid must be ascending")
    if pitch_grid[0] < 50.0 or pitch_grid[-1] > 500.0:
        raise ConfigError("pitch grid must lie within [50, 500] Hz")
    if k_max < 1:
        raise ConfigError("k_max must be at least 1")
    bin_width = sample_rate_hz / fft_size
    weights = np.zeros((pitch_grid.size, n_bins))
    for r, f0 in enumerate(pitch_grid):
        for k in range(1, k_max + 1):
            fk = k * f0
            if fk >= sample_rate_hz / 2:
                break
            b = fk / bin_width
            lo = int(np.floor(b))
            frac = b - lo
            weights[r, lo] += 1.0 - frac
            if frac > 0.0 and lo + 1 < n_bins:
                weights[r, lo + 1] += frac
        weights[r] /= weights[r].sum()
    return CombPitchMatrix(weights, pitch_grid)


def comb_matrix_from_config(cfg: Config) -> CombPitchMatrix:
    grid = np.geomspace(cfg["uie.pitch_min"], cfg["uie.pitch_max"], cfg["uie.pitch_bins"])
    return build_comb_matrix(grid, k_max=cfg["uie.kmax"])


def comb_salience(magnitude: torch.Tensor, comb: torch.Tensor) -> torch.Tensor:
    """Per-frame correlation with every comb row: (..., F) -> (..., P).

    Linear in the magnitude, hence scale-equivariant.
    """
    if magnitude.shape[-1] != comb.shape[-1]:
        raise ShapeError(
            f"magnitude has {magnitude.shape[-1]} bins, comb expects {comb.shape[-1]}"
        )
    return magnitude @ comb.T


def pitch_attention(salience: torch.Tensor, temperature: float) -> torch.Tensor:
    """Softmax over pitch candidates of L1-normalized salience / temperature."""
    norm = salience / (salience.sum(dim=-1, keepdim=True) + _SALIENCE_EPS)
    return torch.softmax(norm / temperature, dim=-1)


def planes_of(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Split (B, T, 2F) into real/imaginary (B, T, F) planes."""
    n_bins = x.shape[-1] // 2
    return x[..., :n_bins], x[..., n_bins:]


class CausalConv2d(nn.Module):
    """Conv over (B, C, T, F), zero look-ahead in time, same-size in frequency."""

    def __init__(self, in_channels: int, out_channels: int, kernel: tuple[int, int] = (3, 5)):
        super().__init__()
        self.kernel = kernel
        self.conv = nn.Conv2d(in_channels, out_channels, kernel, padding=(0, kernel[1] // 2))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.nn.functional.pad(x, (0, 0, self.kernel[0] - 1, 0))
        return self.conv(x)


class HarmonicAttention(nn.Module):
    """Extracts the T x C x F flow from a noisy complex spectrum.

    Channels fed to the learned projection: real plane, imaginary plane,
    and the attention-weighted harmonic template.
    """

    def __init__(self, comb: CombPitchMatrix, channels: int, temperature: float = 0.1):
        super().__init__()
        self.temperature = float(temperature)
        self.channels = int(channels)
        self.register_buffer("comb", torch.tensor(comb.weights, dtype=torch.float32))
        self.project = CausalConv2d(3, channels)

    def harmonic_template(self, x: torch.Tensor) -> torch.Tensor:
        """Convex combination of comb rows per frame: (B, T, 2F) -> (B, T, F)."""
        re, im = planes_of(x)
        comb = self.comb.to(x.dtype)
        mag = torch.sqrt(re * re + im * im + _SALIENCE_EPS)
        alpha = pitch_attention(comb_salience(mag, comb), self.temperature)
        return alpha @ comb

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[-1] != 2 * self.comb.shape[1]:
            raise ShapeError(
                f"expected (batch, frames, {2 * self.comb.shape[1]}), got {tuple(x.shape)}"
            )
        re, im = planes_of(x)
        h = self.harmonic_template(x)
        stacked = torch.stack([re, im, h], dim=1)  # (B, 3, T, F)
        return self.project(stacked)  # (B, C, T, F)

"""Losses and evaluation metrics.

The training objective combines time-domain scale-invariant SNR with a
bark-band log-spectral distortion standing in for a full psychoacoustic
model: magnitudes are pooled into triangular bands laid out uniformly on
the bark scale, and per-band log-power differences are averaged.  SI-SNR
and SI-SDR share one formula; the metric entry point caps at +60 dB,
the loss entry point stays uncapped and differentiable.

STOI follows its defining algorithm: band-limit and decimate to 10 kHz,
256-sample/50%-overlap frames (512-point FFT), 15 one-third-octave bands
from 150 Hz, removal of frames more than 40 dB below the loudest clean
frame, then mean linear correlation of 384 ms (30-frame) band envelopes
after per-segment normalization and -15 dB SDR clipping.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.signal import resample_poly

from .audio import AudioClip
from .errors import InventoryError, LengthError, ReferenceError_, ShapeError
from .spectral import ComplexSpectrum

SI_SDR_CAP_DB = 60.0
_METRIC_EPS = 1e-12
_LOSS_EPS = 1e-8
_BAND_EPS = 1e-10

STOI_RATE = 10000
STOI_FRAME = 256
STOI_HOP = 128
STOI_NFFT = 512
STOI_N_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEG_FRAMES = 30
STOI_DYN_RANGE_DB = 40.0
STOI_CLIP_DB = -15.0


# ---------------------------------------------------------------------------
# scale-invariant SNR / SDR


def _as_samples(x) -> np.ndarray:
    if isinstance(x, AudioClip):
        return np.asarray(x.samples, dtype=np.float64)
    return np.asarray(x, dtype=np.float64)


def si_sdr(ref, est) -> float:
    """Scale-invariant SDR in dB, capped at +60."""
    ref = _as_samples(ref)
    est = _as_samples(est)
    if ref.shape != est.shape:
        raise ShapeError(f"length mismatch: ref {ref.shape}, est {est.shape}")
    if ref.size < 1:
        raise LengthError("empty signals")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy <= 0.0:
        raise ReferenceError_("reference signal has zero energy")
    alpha = float(np.dot(est, ref)) / ref_energy
    target = alpha * ref
    err = est - target
    val = 10.0 * math.log10(float(np.dot(target, target)) / (float(np.dot(err, err)) + _METRIC_EPS))
    return min(val, SI_SDR_CAP_DB)


def si_snr_loss(ref: torch.Tensor, est: torch.Tensor) -> torch.Tensor:
    """Negative SI-SNR on the autograd graph; uncapped, eps-regularized.

    Accepts (L,) or (B, L); batches are averaged.
    """
    if ref.shape != est.shape:
        raise ShapeError(f"length mismatch: ref {tuple(ref.shape)}, est {tuple(est.shape)}")
    if ref.dim() == 1:
        ref = ref[None]
        est = est[None]
    ref_energy = (ref * ref).sum(dim=1, keepdim=True)
    alpha = (est * ref).sum(dim=1, keepdim=True) / (ref_energy + _LOSS_EPS)
    target = alpha * ref
    err = est - target
    ratio = (target * target).sum(dim=1) / ((err * err).sum(dim=1) + _LOSS_EPS)
    return (-10.0 * torch.log10(ratio + _LOSS_EPS)).mean()


# ---------------------------------------------------------------------------
# bark-band perceptual surrogate


def _hz_to_bark(f):
    return 26.81 * f / (1960.0 + f) - 0.53


def _bark_to_hz(z):
    return 1960.0 * (z + 0.53) / (26.81 - (z + 0.53))


def bark_band_matrix(n_bands: int = 24, n_bins: int = 257, sample_rate_hz: int = 16000) -> np.ndarray:
    """Triangular band weights (n_bands x n_bins), unit peak per band.

    Band centers are uniform on the bark axis between 50 Hz and Nyquist;
    each triangle spans its neighbouring centers (50% overlap).  Rows are
    rescaled to a unit maximum after sampling onto the bin grid.
    """
    freqs = np.arange(n_bins) * (sample_rate_hz / 2) / (n_bins - 1)
    z_lo, z_hi = _hz_to_bark(50.0), _hz_to_bark(sample_rate_hz / 2)
    centers_z = np.linspace(z_lo, z_hi, n_bands + 2)
    centers = _bark_to_hz(centers_z)
    mat = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, mid, hi = centers[b], centers[b + 1], centers[b + 2]
        rising = (freqs >= lo) & (freqs <= mid)
        falling = (freqs > mid) & (freqs <= hi)
        mat[b, rising] = (freqs[rising] - lo) / (mid - lo)
        mat[b, falling] = (hi - freqs[falling]) / (hi - mid)
        mat[b] /= mat[b].max()
    return mat


def perceptual_loss_t(ref_planes: torch.Tensor, est_planes: torch.Tensor, bands: torch.Tensor) -> torch.Tensor:
    """Band log-power distortion on (B, T, 2F) plane tensors (graph-side)."""
    if ref_planes.shape != est_planes.shape:
        raise ShapeError(
            f"shape mismatch: ref {tuple(ref_planes.shape)}, est {tuple(est_planes.shape)}"
        )
    n_bins = ref_planes.shape[-1] // 2

    def band_power(x: torch.Tensor) -> torch.Tensor:
        power = x[..., :n_bins] ** 2 + x[..., n_bins:] ** 2
        return power @ bands.T

    d = torch.log10(band_power(est_planes) + _BAND_EPS) - torch.log10(band_power(ref_planes) + _BAND_EPS)
    return (d * d).mean()


def perceptual_loss(ref_spec: ComplexSpectrum, est_spec: ComplexSpectrum, n_bands: int = 24) -> float:
    """Band log-power distortion between two spectra (metric-side)."""
    if ref_spec.data.shape != est_spec.data.shape:
        raise ShapeError(
            f"shape mismatch: ref {ref_spec.data.shape}, est {est_spec.data.shape}"
        )
    bands = torch.tensor(bark_band_matrix(n_bands, ref_spec.bins), dtype=torch.float64)
    ref_t = torch.tensor(ref_spec.data, dtype=torch.float64)[None]
    est_t = torch.tensor(est_spec.data, dtype=torch.float64)[None]
    return float(perceptual_loss_t(ref_t, est_t, bands))


@dataclass
class LossBreakdown:
    si_snr_term: float
    perceptual_term: float
    w_sisnr: float
    w_perc: float

    @property
    def total(self) -> float:
        return self.w_sisnr * self.si_snr_term + self.w_perc * self.perceptual_term


# ---------------------------------------------------------------------------
# STOI


def _third_octave_bands(n_bins: int) -> np.ndarray:
    freqs = np.arange(n_bins) * (STOI_RATE / STOI_NFFT)
    k = np.arange(STOI_N_BANDS)
    centers = STOI_MIN_FREQ * 2.0 ** (k / 3.0)
    lows = centers / 2.0 ** (1.0 / 6.0)
    highs = centers * 2.0 ** (1.0 / 6.0)
    mat = np.zeros((STOI_N_BANDS, n_bins))
    for b in range(STOI_N_BANDS):
        mat[b, (freqs >= lows[b]) & (freqs < highs[b])] = 1.0
    return mat


def _frame(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    n = 1 + (x.size - STOI_FRAME) // STOI_HOP
    idx = np.arange(STOI_FRAME)[None, :] + STOI_HOP * np.arange(n)[:, None]
    return x[idx] * window


def _overlap_add(frames: np.ndarray) -> np.ndarray:
    out = np.zeros((frames.shape[0] - 1) * STOI_HOP + STOI_FRAME)
    for i, fr in enumerate(frames):
        out[i * STOI_HOP : i * STOI_HOP + STOI_FRAME] += fr
    return out


def stoi(ref, est) -> float:
    """Short-time objective intelligibility of est against clean ref."""
    ref = _as_samples(ref)
    est = _as_samples(est)
    if ref.shape != est.shape:
        raise ShapeError(f"length mismatch: ref {ref.shape}, est {est.shape}")
    ref10 = resample_poly(ref, 5, 8)
    est10 = resample_poly(est, 5, 8)
    if ref10.size < STOI_FRAME:
        raise LengthError("signal too short for STOI analysis")

    window = np.hanning(STOI_FRAME + 2)[1:-1]
    ref_frames = _frame(ref10, window)
    est_frames = _frame(est10, window)
    energies_db = 20.0 * np.log10(np.linalg.norm(ref_frames, axis=1) + _METRIC_EPS)
    keep = energies_db > energies_db.max() - STOI_DYN_RANGE_DB
    ref_frames = ref_frames[keep]
    est_frames = est_frames[keep]
    if ref_frames.shape[0] < STOI_SEG_FRAMES:
        raise LengthError(
            f"fewer than {STOI_SEG_FRAMES} active frames after silence removal"
        )
    ref_act = _overlap_add(ref_frames)
    est_act = _overlap_add(est_frames)

    spec_ref = np.fft.rfft(_frame(ref_act, window), n=STOI_NFFT, axis=1)
    spec_est = np.fft.rfft(_frame(est_act, window), n=STOI_NFFT, axis=1)
    bands = _third_octave_bands(spec_ref.shape[1])
    env_ref = np.sqrt(np.abs(spec_ref) ** 2 @ bands.T)  # (frames, bands)
    env_est = np.sqrt(np.abs(spec_est) ** 2 @ bands.T)
    n_frames = env_ref.shape[0]
    if n_frames < STOI_SEG_FRAMES:
        raise LengthError("not enough frames for a 384 ms analysis segment")

    clip_gain = 10.0 ** (-STOI_CLIP_DB / 20.0)
    total = 0.0
    count = 0
    for m in range(STOI_SEG_FRAMES, n_frames + 1):
        x = env_ref[m - STOI_SEG_FRAMES : m]  # (30, bands)
        y = env_est[m - STOI_SEG_FRAMES : m]
        scale = np.linalg.norm(x, axis=0) / (np.linalg.norm(y, axis=0) + _METRIC_EPS)
        y_norm = np.minimum(y * scale, x * (1.0 + clip_gain))
        xc = x - x.mean(axis=0)
        yc = y_norm - y_norm.mean(axis=0)
        denom = np.linalg.norm(xc, axis=0) * np.linalg.norm(yc, axis=0) + _METRIC_EPS
        total += float(((xc * yc).sum(axis=0) / denom).sum())
        count += STOI_N_BANDS
    return total / count


# ---------------------------------------------------------------------------
# corpus evaluation


def evaluate(rows, enhance_fn, out_csv: str | None = None) -> list[dict]:
    """Per-utterance and mean SI-SDR/STOI for noisy and enhanced signals.

    ``rows`` yields (utt_id, snr_db, noisy AudioClip, clean AudioClip);
    ``enhance_fn`` maps a noisy AudioClip to an enhanced one.  Results
    are returned as dicts (plus a trailing ``mean`` row) and optionally
    written as CSV.
    """
    results = []
    for utt_id, snr_db, noisy, clean in rows:
        enhanced = enhance_fn(noisy)
        results.append(
            {
                "utt_id": utt_id,
                "snr_db": snr_db,
                "si_sdr_noisy": si_sdr(clean, noisy),
                "si_sdr_enh": si_sdr(clean, enhanced),
                "stoi_noisy": stoi(clean, noisy),
                "stoi_enh": stoi(clean, enhanced),
            }
        )
    if not results:
        raise InventoryError("no rows to evaluate")
    mean_row = {
        "utt_id": "mean",
        "snr_db": float(np.mean([r["snr_db"] for r in results])),
        "si_sdr_noisy": float(np.mean([r["si_sdr_noisy"] for r in results])),
        "si_sdr_enh": float(np.mean([r["si_sdr_enh"] for r in results])),
        "stoi_noisy": float(np.mean([r["stoi_noisy"] for r in results])),
        "stoi_enh": float(np.mean([r["stoi_enh"] for r in results])),
    }
    table = results + [mean_row]
    if out_csv is not None:
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=["utt_id", "snr_db", "si_sdr_noisy", "si_sdr_enh", "stoi_noisy", "stoi_enh"],
            )
            writer.writeheader()
            writer.writerows(table)
    return table

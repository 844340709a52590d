"""Noisy-mixture synthesis at prescribed SNRs and manifest management.

Segments are fixed at 4 s (64000 samples at 16 kHz), cropped from the
source files with seeded offsets; shorter sources are looped.  SNR is
defined on full-segment energy.  When a mixture would clip, the noisy
segment and its clean reference are scaled down jointly so the training
target stays aligned.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioClip, load_wav
from .errors import EnergyError, InventoryError, ShapeError

SEGMENT_SAMPLES = 64000
SEGMENT_SECONDS = 4.0
PEAK_LIMIT = 0.99
SNR_FLOOR_DB = -5.0
SNR_CEIL_DB = 30.0
TRAIN_SNR_CEIL_DB = 20.0
_RMS_FLOOR = 1e-6


@dataclass(frozen=True)
class MixSpec:
    """One manifest row: a clean/noise pairing at a prescribed SNR."""

    clean_path: str
    noise_path: str
    snr_db: float
    noise_offset: int
    split: str
    seed: int

    def __post_init__(self) -> None:
        if not (SNR_FLOOR_DB <= self.snr_db <= SNR_CEIL_DB):
            raise ShapeError(f"snr_db {self.snr_db} outside [{SNR_FLOOR_DB}, {SNR_CEIL_DB}]")
        if self.split == "train" and self.snr_db > TRAIN_SNR_CEIL_DB:
            raise ShapeError(f"training snr_db {self.snr_db} above {TRAIN_SNR_CEIL_DB}")
        if self.split not in ("train", "val", "test"):
            raise ShapeError(f"unknown split {self.split!r}")


@dataclass
class MixResult:
    noisy: AudioClip
    clean_ref: AudioClip
    noise_gain: float
    peak_scale: float


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0


def mix_at_snr(clean: AudioClip, noise: AudioClip, snr_db: float) -> MixResult:
    """Mix noise into clean at an exact full-segment SNR.

    The gain g solves 10*log10(sum c^2 / sum (g n)^2) = snr_db.  If the
    mixture peak exceeds 0.99, mixture and clean reference are scaled
    together by 0.99/peak (reported as peak_scale).
    """
    c = np.asarray(clean.samples, dtype=np.float64)
    n = np.asarray(noise.samples, dtype=np.float64)
    if c.shape != n.shape:
        raise ShapeError(f"length mismatch: clean {c.shape}, noise {n.shape}")
    rms_c, rms_n = _rms(c), _rms(n)
    if rms_c <= _RMS_FLOOR:
        raise EnergyError(f"clean RMS {rms_c:g} below {_RMS_FLOOR:g}")
    if rms_n <= _RMS_FLOOR:
        raise EnergyError(f"noise RMS {rms_n:g} below {_RMS_FLOOR:g}")
    gain = (rms_c / rms_n) * 10.0 ** (-snr_db / 20.0)
    noisy = c + gain * n
    peak = float(np.abs(noisy).max())
    scale = 1.0
    if peak > PEAK_LIMIT:
        scale = PEAK_LIMIT / peak
        noisy = noisy * scale
        c = c * scale
    return MixResult(
        noisy=AudioClip(noisy, clean.sample_rate_hz),
        clean_ref=AudioClip(c, clean.sample_rate_hz),
        noise_gain=gain,
        peak_scale=scale,
    )


# ---------------------------------------------------------------------------
# manifest


def _list_wavs(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise InventoryError(f"{directory}: not a directory")
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(".wav"))
    if not names:
        raise InventoryError(f"{directory}: no WAV files")
    return [os.path.join(directory, f) for f in names]


def build_manifest(
    clean_dir: str,
    noise_dir: str,
    out_path: str,
    target_seconds: float,
    snr_range: tuple[float, float] = (SNR_FLOOR_DB, TRAIN_SNR_CEIL_DB),
    seed: int = 0,
    split: str = "trainval",
) -> list[MixSpec]:
    """Write a deterministic manifest covering at least target_seconds.

    With split="trainval", rows are assigned 4:1 by row count and the
    clean files backing train and val are disjoint; split="test" labels
    every row as test.  Paths in the CSV are relative to the manifest.
    """
    lo, hi = snr_range
    if not (SNR_FLOOR_DB <= lo <= hi <= SNR_CEIL_DB):
        raise ShapeError(f"snr range [{lo}, {hi}] outside [{SNR_FLOOR_DB}, {SNR_CEIL_DB}]")
    clean_files = _list_wavs(clean_dir)
    noise_files = _list_wavs(noise_dir)
    rng = np.random.default_rng(seed)
    n_rows = max(1, math.ceil(target_seconds / SEGMENT_SECONDS))

    base = os.path.dirname(os.path.abspath(out_path))
    rel = lambda p: os.path.relpath(os.path.abspath(p), base)

    rows: list[MixSpec] = []
    if split == "trainval":
        order = list(rng.permutation(len(clean_files)))
        n_val_files = max(1, round(len(clean_files) / 5)) if len(clean_files) > 1 else 0
        val_files = [clean_files[i] for i in order[:n_val_files]]
        train_files = [clean_files[i] for i in order[n_val_files:]]
        if not train_files:
            train_files, val_files = val_files, []
        n_val = round(n_rows / 5)
        n_train = n_rows - n_val
        plan = [("train", train_files, n_train), ("val", val_files, n_val)]
    elif split == "test":
        plan = [("test", clean_files, n_rows)]
    else:
        raise ShapeError(f"unknown split plan {split!r}")

    for split_name, files, count in plan:
        if count > 0 and not files:
            raise InventoryError(f"no clean files available for split {split_name!r}")
        for i in range(count):
            clean = files[int(rng.integers(len(files)))]
            noise = noise_files[int(rng.integers(len(noise_files)))]
            snr = float(rng.uniform(lo, hi))
            offset = int(rng.integers(0, 10 * SEGMENT_SAMPLES))
            row_seed = int(rng.integers(0, 2**31 - 1))
            rows.append(
                MixSpec(rel(clean), rel(noise), round(snr, 6), offset, split_name, row_seed)
            )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["clean_path", "noise_path", "snr_db", "noise_offset", "split", "seed"])
    for r in rows:
        writer.writerow([r.clean_path, r.noise_path, f"{r.snr_db:.6f}", r.noise_offset, r.split, r.seed])
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return rows


def load_manifest(path: str) -> list[MixSpec]:
    if not os.path.exists(path):
        raise InventoryError(f"{path}: manifest not found")
    rows: list[MixSpec] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["clean_path", "noise_path", "snr_db", "noise_offset", "split", "seed"]
        if reader.fieldnames != expected:
            raise InventoryError(f"{path}: bad manifest header {reader.fieldnames}")
        for rec in reader:
            rows.append(
                MixSpec(
                    rec["clean_path"],
                    rec["noise_path"],
                    float(rec["snr_db"]),
                    int(rec["noise_offset"]),
                    rec["split"],
                    int(rec["seed"]),
                )
            )
    if not rows:
        raise InventoryError(f"{path}: empty manifest")
    return rows


@lru_cache(maxsize=256)
def _cached_samples(path: str) -> np.ndarray:
    return load_wav(path).samples


def _segment(samples: np.ndarray, offset: int) -> np.ndarray:
    """4 s crop starting at offset, looping the source if it is short."""
    if samples.size == 0:
        raise EnergyError("empty source file")
    idx = (offset + np.arange(SEGMENT_SAMPLES)) % samples.size
    return samples[idx]


def materialize(spec: MixSpec, manifest_dir: str) -> tuple[AudioClip, AudioClip, MixResult]:
    """Produce (noisy, clean_ref, full mix result) for one manifest row."""
    clean_path = os.path.join(manifest_dir, spec.clean_path)
    noise_path = os.path.join(manifest_dir, spec.noise_path)
    for p in (clean_path, noise_path):
        if not os.path.exists(p):
            raise InventoryError(f"missing source file: {p}")
    row_rng = np.random.default_rng(spec.seed)
    clean_offset = int(row_rng.integers(0, 10 * SEGMENT_SAMPLES))
    clean_seg = _segment(_cached_samples(clean_path), clean_offset)
    noise_seg = _segment(_cached_samples(noise_path), spec.noise_offset)
    result = mix_at_snr(AudioClip(clean_seg, 16000), AudioClip(noise_seg, 16000), spec.snr_db)
    return result.noisy, result.clean_ref, result

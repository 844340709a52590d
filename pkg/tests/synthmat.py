"""Synthetic speech-like and noise material for tests and acceptance runs.

Clean "speakers" are harmonic sources with a random-walk pitch contour,
per-speaker formant coloring, syllabic amplitude modulation with pauses,
and light aspiration noise; this gives the harmonic-attention front end
realistic comb structure to lock onto.  Noise files cover white, pink,
modulated, hum, and band-passed flavors.
"""

from __future__ import annotations

import os

import numpy as np

from rui_enhance.audio import AudioClip, save_wav

FS = 16000


def speechlike(seed: int, seconds: float = 2.0, fs: int = FS) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    t = np.arange(n) / fs
    f0_base = rng.uniform(90.0, 240.0)
    f0 = f0_base + 40.0 * np.cumsum(rng.normal(0.0, 0.01, n))
    f0 = np.clip(f0, 70.0, 320.0)
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    formants = rng.uniform([300.0, 900.0, 2200.0], [800.0, 2000.0, 3500.0])
    bws = rng.uniform(150.0, 400.0, size=3)
    gains = rng.uniform(1.0, 2.5, size=3)
    sig = np.zeros(n)
    for k in range(1, 17):
        fk = k * f0_base
        if fk > fs / 2 - 200:
            break
        amp = 1.0 / k**0.8
        amp *= 1.0 + sum(g * np.exp(-(((fk - fc) / bw) ** 2)) for fc, bw, g in zip(formants, bws, gains))
        sig += amp * np.sin(k * phase + rng.uniform(0.0, 2.0 * np.pi))
    syllable = np.clip(np.sin(2.0 * np.pi * rng.uniform(2.5, 4.5) * t + rng.uniform(0, 6)) + 0.3, 0.0, None)
    pauses = (np.sin(2.0 * np.pi * rng.uniform(0.4, 0.9) * t + rng.uniform(0, 6)) > -0.7).astype(float)
    sig = sig * syllable * pauses
    sig += 0.02 * rng.normal(0.0, 1.0, n) * syllable * pauses
    peak = np.abs(sig).max()
    return 0.7 * sig / peak if peak > 0 else sig


def noiselike(seed: int, seconds: float = 2.0, fs: int = FS) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    kind = seed % 5
    white = rng.normal(0.0, 1.0, n)
    if kind == 0:
        sig = white
    elif kind == 1:  # pink via 1/sqrt(f) spectral shaping
        spec = np.fft.rfft(white)
        f = np.maximum(np.fft.rfftfreq(n, 1 / fs), 1.0)
        sig = np.fft.irfft(spec / np.sqrt(f), n=n)
    elif kind == 2:  # slow amplitude-modulated noise
        env = 0.4 + 0.6 * (0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(2, 8) * np.arange(n) / fs))
        sig = white * env
    elif kind == 3:  # mains-style hum plus noise floor
        t = np.arange(n) / fs
        sig = 0.3 * white
        for k in (1, 2, 3):
            sig += np.sin(2 * np.pi * 50.0 * k * t + rng.uniform(0, 6)) / k
    else:  # band-passed roar
        spec = np.fft.rfft(white)
        f = np.fft.rfftfreq(n, 1 / fs)
        lo, hi = sorted(rng.uniform(200.0, 4000.0, size=2))
        spec[(f < lo) | (f > hi + 400)] = 0.0
        sig = np.fft.irfft(spec, n=n)
    rms = np.sqrt(np.mean(sig**2))
    sig = 0.2 * sig / rms
    return np.clip(sig, -0.99, 0.99)


def make_corpus(
    root: str,
    n_clean: int = 12,
    n_noise: int = 6,
    seconds_each: float = 8.0,
    seed: int = 0,
) -> tuple[str, str]:
    """Write WAV inventories; returns (clean_dir, noise_dir)."""
    clean_dir = os.path.join(root, "clean")
    noise_dir = os.path.join(root, "noise")
    os.makedirs(clean_dir, exist_ok=True)
    os.makedirs(noise_dir, exist_ok=True)
    for i in range(n_clean):
        clip = AudioClip(speechlike(seed * 1000 + i, seconds_each).astype(np.float32), FS)
        save_wav(clip, os.path.join(clean_dir, f"spk{i:03d}.wav"))
    for i in range(n_noise):
        clip = AudioClip(noiselike(seed * 1000 + 500 + i, seconds_each).astype(np.float32), FS)
        save_wav(clip, os.path.join(noise_dir, f"noise{i:03d}.wav"))
    return clean_dir, noise_dir

import numpy as np
import pytest
from scipy.io import wavfile

from rui_enhance.audio import AudioClip, load_wav, save_wav
from rui_enhance.errors import FormatError, SampleRateError, WriteError


def test_pcm16_scaling(tmp_path):
    path = str(tmp_path / "const.wav")
    wavfile.write(path, 16000, np.full(800, 16384, dtype=np.int16))
    clip = load_wav(path)
    assert np.all(clip.samples == 0.5)
    assert clip.sample_rate_hz == 16000


def test_stereo_downmix_mean(tmp_path):
    path = str(tmp_path / "stereo.wav")
    left = np.full(400, 0.2, dtype=np.float32)
    right = np.full(400, 0.4, dtype=np.float32)
    wavfile.write(path, 16000, np.stack([left, right], axis=1))
    clip = load_wav(path)
    assert np.allclose(clip.samples, 0.3, atol=1e-7)


def test_wrong_rate_rejected(tmp_path):
    path = str(tmp_path / "slow.wav")
    wavfile.write(path, 8000, np.zeros(100, dtype=np.int16))
    with pytest.raises(SampleRateError, match="8000"):
        load_wav(path)


def test_unsupported_codec_rejected(tmp_path):
    path = str(tmp_path / "wide.wav")
    wavfile.write(path, 16000, np.zeros(100, dtype=np.int32))
    with pytest.raises(FormatError):
        load_wav(path)


def test_float32_roundtrip_exact(tmp_path, rng):
    samples = rng.uniform(-1.0, 1.0, 16000).astype(np.float32)
    path = str(tmp_path / "noise.wav")
    save_wav(AudioClip(samples, 16000), path)
    back = load_wav(path)
    assert np.max(np.abs(back.samples - samples)) == 0.0


def test_chirp_roundtrip_byte_exact(tmp_path):
    # byte-comparison oracle: save -> load -> save must reproduce the file
    t = np.arange(16000) / 16000.0
    freq = 100.0 + (4000.0 - 100.0) * t / t[-1]
    chirp = (0.8 * np.sin(2 * np.pi * np.cumsum(freq) / 16000.0)).astype(np.float32)
    p1 = str(tmp_path / "chirp1.wav")
    p2 = str(tmp_path / "chirp2.wav")
    save_wav(AudioClip(chirp, 16000), p1)
    save_wav(load_wav(p1), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_empty_clip_roundtrip(tmp_path):
    path = str(tmp_path / "empty.wav")
    save_wav(AudioClip(np.zeros(0), 16000), path)
    clip = load_wav(path)
    assert len(clip) == 0


def test_downmix_linearity(tmp_path, rng):
    left = rng.uniform(-0.5, 0.5, 500).astype(np.float32)
    right = rng.uniform(-0.5, 0.5, 500).astype(np.float32)
    p_mix = str(tmp_path / "mix.wav")
    p_l = str(tmp_path / "l.wav")
    p_r = str(tmp_path / "r.wav")
    wavfile.write(p_mix, 16000, np.stack([left, right], axis=1))
    wavfile.write(p_l, 16000, left)
    wavfile.write(p_r, 16000, right)
    mixed = load_wav(p_mix).samples
    mean = 0.5 * (load_wav(p_l).samples + load_wav(p_r).samples)
    assert np.max(np.abs(mixed - mean)) <= 1e-7


def test_hot_float_input_normalized(tmp_path):
    path = str(tmp_path / "hot.wav")
    wavfile.write(path, 16000, np.full(100, 1.5, dtype=np.float32))
    clip = load_wav(path)
    assert np.abs(clip.samples).max() <= 1.0 + 1e-6


def test_nonfinite_samples_rejected():
    with pytest.raises(FormatError):
        AudioClip(np.array([0.0, np.nan]), 16000)


def test_save_to_missing_dir_fails(tmp_path):
    with pytest.raises(WriteError):
        save_wav(AudioClip(np.zeros(10), 16000), str(tmp_path / "nope" / "x.wav"))

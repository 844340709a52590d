import numpy as np
import pytest
import torch

from rui_enhance.compute import ParamStore, grad_check
from rui_enhance.config import default_config
from rui_enhance.errors import ConfigError, ShapeError
from rui_enhance.uie import (
    HarmonicAttention,
    build_comb_matrix,
    comb_matrix_from_config,
    comb_salience,
    pitch_attention,
)

BIN_HZ = 31.25


def test_exact_bin_pitch():
    comb = build_comb_matrix(np.array([125.0]))
    row = comb.weights[0]
    nonzero = np.nonzero(row)[0]
    assert list(nonzero) == [4 * k for k in range(1, 17)]
    assert np.allclose(row[nonzero], row[nonzero][0])  # equal full weights


def test_fractional_bin_split():
    # 110 Hz -> bin 3.52: weight ratio 0.48 : 0.52 between bins 3 and 4
    comb = build_comb_matrix(np.array([110.0]))
    row = comb.weights[0]
    assert row[3] > 0 and row[4] > 0
    assert row[3] / (row[3] + row[4]) == pytest.approx(0.48, abs=1e-12)
    assert row[4] / (row[3] + row[4]) == pytest.approx(0.52, abs=1e-12)


def test_rows_l1_normalized():
    comb = comb_matrix_from_config(default_config())
    sums = comb.weights.sum(axis=1)
    assert np.allclose(sums, 1.0, atol=1e-9)
    assert np.all(comb.weights >= 0.0)


def test_support_within_one_bin_of_harmonics():
    grid = np.geomspace(50.0, 500.0, 16)
    comb = build_comb_matrix(grid)
    for r, f0 in enumerate(grid):
        support = set(np.nonzero(comb.weights[r])[0])
        allowed = set()
        for k in range(1, 17):
            if k * f0 >= 8000.0:
                break
            b = k * f0 / BIN_HZ
            allowed.update({int(np.floor(b)), int(np.ceil(b))})
        assert support <= allowed


def test_harmonics_capped_at_nyquist():
    comb = build_comb_matrix(np.array([500.0]))
    # 16 * 500 = 8000 is not strictly below Nyquist: only 15 harmonics land
    top_bin = np.nonzero(comb.weights[0])[0].max()
    assert top_bin <= int(np.ceil(15 * 500.0 / BIN_HZ))


def test_bad_grids_rejected():
    with pytest.raises(ConfigError):
        build_comb_matrix(np.array([]))
    with pytest.raises(ConfigError):
        build_comb_matrix(np.array([200.0, 100.0]))
    with pytest.raises(ConfigError):
        build_comb_matrix(np.array([30.0, 100.0]))
    with pytest.raises(ConfigError):
        build_comb_matrix(np.array([100.0]), k_max=0)


def test_salience_self_identification_bruteforce():
    comb = comb_matrix_from_config(default_config())
    idx_125 = int(np.argmin(np.abs(comb.pitch_grid - 125.0)))
    frames = 5
    mag = np.tile(comb.weights[idx_125], (frames, 1))
    sal = comb_salience(torch.tensor(mag), torch.tensor(comb.weights)).numpy()
    # brute-force oracle: correlate against every row explicitly
    oracle = np.array([[np.dot(comb.weights[r], mag[t]) for r in range(64)] for t in range(frames)])
    assert np.allclose(sal, oracle, atol=1e-12)
    assert np.all(sal.argmax(axis=1) == idx_125)


def test_salience_self_identification_all_rows():
    comb = comb_matrix_from_config(default_config())
    sal = comb.weights @ comb.weights.T
    assert np.all(sal.argmax(axis=1) == np.arange(comb.n_pitches))


def test_attention_sharpens_to_one_hot():
    sal = torch.tensor([[0.2, 0.5, 0.3]], dtype=torch.float64)
    alpha = pitch_attention(sal, temperature=1e-4)
    assert alpha[0, 1] > 0.999
    assert torch.allclose(alpha.sum(dim=-1), torch.ones(1, dtype=torch.float64), atol=1e-9)


def test_salience_scale_equivariant(rng):
    comb = comb_matrix_from_config(default_config())
    comb_t = torch.tensor(comb.weights)
    mag = torch.tensor(np.abs(rng.normal(size=(7, 257))))
    s1 = comb_salience(mag, comb_t)
    s2 = comb_salience(3.7 * mag, comb_t)
    assert torch.allclose(s2, 3.7 * s1, atol=1e-12)
    assert torch.equal(s1.argmax(dim=-1), s2.argmax(dim=-1))


def test_template_is_convex_combination(rng):
    cfg = default_config()
    comb = comb_matrix_from_config(cfg)
    module = HarmonicAttention(comb, channels=14)
    x = torch.tensor(rng.normal(size=(1, 9, 514)), dtype=torch.float32)
    h = module.harmonic_template(x)
    assert torch.all(h >= 0.0)
    assert torch.allclose(h.sum(dim=-1), torch.ones(1, 9), atol=1e-6)


def test_flow_shape_contract(rng):
    cfg = default_config()
    module = HarmonicAttention(comb_matrix_from_config(cfg), channels=14)
    x = torch.tensor(rng.normal(size=(1, 41, 514)), dtype=torch.float32)
    a = module(x)
    assert tuple(a.shape) == (1, 14, 41, 257)
    assert tuple(a[0].permute(1, 0, 2).shape) == (41, 14, 257)
    with pytest.raises(ShapeError):
        module(torch.zeros(1, 5, 100))


def test_gradcheck_through_softmax_and_projection(rng):
    cfg = default_config()
    module = HarmonicAttention(comb_matrix_from_config(cfg), channels=4).double()
    x = torch.tensor(rng.normal(size=(1, 4, 514)) * 0.4, requires_grad=True)
    params = {"input": x}
    params.update(dict(module.named_parameters()))
    report = grad_check(
        lambda: module(x).square().mean(), ParamStore.from_dict(params), tol=1e-4, coords_per_param=8
    )
    assert report.passed, str(report)

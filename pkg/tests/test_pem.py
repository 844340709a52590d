import numpy as np
import pytest
import torch

from rui_enhance.compute import ParamStore, grad_check, init_parameters
from rui_enhance.config import default_config
from rui_enhance.errors import ShapeError
from rui_enhance.pem import CrnPem, MaskPem, build_pem, parameter_count
from rui_enhance.uie import planes_of

# architecture table (README "Model sizes"); tests pin the exact counts
MASK_PEM_PARAMS = 280_833
CRN_PEM_PARAMS = 313_666


def _spec_tensor(rng, frames=20, scale=0.5):
    return torch.tensor(rng.normal(size=(1, frames, 514)) * scale, dtype=torch.float32)


def _build(kind):
    model = build_pem(default_config().replaced(**{"pem.kind": kind}))
    init_parameters(model, seed=3)
    return model


def test_mask_preserves_phase(rng):
    model = _build("mask")
    x = _spec_tensor(rng)
    with torch.no_grad():
        p = model(x)
    re_x, im_x = planes_of(x)
    re_p, im_p = planes_of(p)
    mag_x = torch.sqrt(re_x**2 + im_x**2)
    phase_x = torch.atan2(im_x, re_x)
    phase_p = torch.atan2(im_p, re_p)
    keep = mag_x > 1e-3
    diff = torch.remainder(phase_p - phase_x + np.pi, 2 * np.pi) - np.pi
    assert float(diff[keep].abs().max()) <= 1e-6


def test_mask_bounded_by_input(rng):
    model = _build("mask")
    x = _spec_tensor(rng)
    with torch.no_grad():
        p = model(x)
    re_x, im_x = planes_of(x)
    re_p, im_p = planes_of(p)
    mag_x = torch.sqrt(re_x**2 + im_x**2)
    mag_p = torch.sqrt(re_p**2 + im_p**2)
    assert torch.all(mag_p <= mag_x + 1e-7)


def test_mask_zero_frame_stays_zero(rng):
    model = _build("mask")
    x = _spec_tensor(rng)
    x[0, 7, :] = 0.0
    with torch.no_grad():
        p = model(x)
    assert torch.all(p[0, 7, :] == 0.0)


@pytest.mark.parametrize("kind", ["mask", "crn"])
def test_shape_contract(kind, rng):
    model = _build(kind)
    x = torch.tensor(rng.normal(size=(1, 41, 514)), dtype=torch.float32)
    with torch.no_grad():
        p = model(x)
    assert tuple(p.shape) == (1, 41, 514)
    with pytest.raises(ShapeError):
        model(torch.zeros(1, 5, 100))


@pytest.mark.parametrize("kind", ["mask", "crn"])
def test_causality_zero_lookahead(kind, rng):
    model = _build(kind)
    x = _spec_tensor(rng, frames=24)
    x2 = x.clone()
    t = 15
    x2[0, t:, :] += 0.7  # perturb frame t and everything after
    with torch.no_grad():
        before = model(x)
        after = model(x2)
    assert torch.equal(before[0, :t, :], after[0, :t, :])
    assert not torch.allclose(before[0, t:, :], after[0, t:, :])


def test_parameter_counts_match_table():
    assert parameter_count(_build("mask")) == MASK_PEM_PARAMS
    assert parameter_count(_build("crn")) == CRN_PEM_PARAMS


def test_width_preset_grows_model():
    base = parameter_count(_build("crn"))
    wide = parameter_count(build_pem(default_config().replaced(**{"pem.kind": "crn", "pem.width": 2})))
    assert wide > 2 * base


@pytest.mark.parametrize("kind", ["mask", "crn"])
def test_gradcheck_both_variants(kind, rng):
    model = _build(kind).double()
    x = torch.tensor(rng.normal(size=(1, 6, 514)) * 0.4, dtype=torch.float64)
    report = grad_check(
        lambda: model(x).square().mean(),
        ParamStore.from_module(model),
        tol=1e-4,
        coords_per_param=6,
    )
    assert report.passed, str(report)

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rui_enhance.errors import ShapeError
from rui_enhance.estimator import RuiEnhancer

from synthmat import noiselike, speechlike


def _pairs(n=4, seconds=1.0):
    noisy, clean = [], []
    for i in range(n):
        s = speechlike(i, seconds)
        nz = noiselike(70 + i, seconds)
        g = np.sqrt(np.mean(s**2)) / np.sqrt(np.mean(nz**2)) * 10 ** (-5 / 20)
        noisy.append(s + g * nz)
        clean.append(s)
    return noisy, clean


def _fast_estimator(**kw):
    params = dict(pem_kind="mask", n_refinements=1, epochs_max=2, batch=2, seed=0)
    params.update(kw)
    return RuiEnhancer(**params)


def test_get_set_params_roundtrip():
    est = RuiEnhancer(pem_kind="mask", n_refinements=2, lr0=5e-4)
    params = est.get_params()
    assert params["pem_kind"] == "mask"
    assert params["n_refinements"] == 2
    est.set_params(n_refinements=4)
    assert est.n_refinements == 4
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


def test_not_fitted_error():
    with pytest.raises(NotFittedError):
        RuiEnhancer().transform([np.zeros(16000)])


def test_fit_transform_score(tmp_path):
    noisy, clean = _pairs()
    est = _fast_estimator().fit(noisy, clean)
    out = est.transform(noisy[:2])
    assert len(out) == 2
    assert out[0].shape == noisy[0].shape
    assert np.all(np.isfinite(out[0]))
    score = est.score(noisy[:2], clean[:2])
    assert np.isfinite(score)
    assert est.predict(noisy[:1])[0].shape == noisy[0].shape


def test_fit_validates_pairs():
    noisy, clean = _pairs(2)
    with pytest.raises(ShapeError):
        _fast_estimator().fit(noisy, clean[:1])
    with pytest.raises(ShapeError):
        _fast_estimator().fit([noisy[0]], [clean[0][:100]])


def test_save_load_identical_output(tmp_path):
    noisy, clean = _pairs()
    est = _fast_estimator().fit(noisy, clean)
    out_before = est.transform(noisy[:1])[0]
    path = str(tmp_path / "est.ckpt")
    est.save(path)
    est2 = RuiEnhancer().load(path)
    out_after = est2.transform(noisy[:1])[0]
    assert np.array_equal(out_before, out_after)
    assert est2.pem_kind == "mask"
    assert est2.n_refinements == 1


def test_deterministic_fit():
    noisy, clean = _pairs(3)

    def losses():
        est = _fast_estimator(epochs_max=1).fit(noisy, clean)
        return [h.train_loss for h in est.history_]

    assert losses() == losses()

"""scikit-learn style front end for the enhancement pipeline.

RuiEnhancer exposes the whole framework as a fit/transform estimator so
it composes with sklearn tooling (clone, get_params/set_params,
pipelines).  fit() consumes paired noisy/clean waveforms; transform()
maps noisy waveforms to enhanced ones.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .audio import AudioClip
from .config import Config
from .errors import ShapeError
from .network import build_model, enhance_clip, load_model, save_model
from .objective import si_sdr
from .spectral import WINDOW_LEN, StftConfig
from .trainer import train_loop


def _to_samples(x) -> np.ndarray:
    if isinstance(x, AudioClip):
        return np.asarray(x.samples, dtype=np.float64)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected 1-D waveform, got shape {arr.shape}")
    return arr


class RuiEnhancer(BaseEstimator, TransformerMixin):
    """Trainable speech enhancer with a fit/transform interface.

    Parameters mirror the flat config keys (dots become underscores).
    All waveforms are 16 kHz mono; fit() pairs must share lengths of at
    least one STFT window.
    """

    def __init__(
        self,
        pem_kind: str = "crn",
        pem_width: int = 1,
        n_refinements: int = 3,
        channels: int = 14,
        pitch_min: float = 50.0,
        pitch_max: float = 500.0,
        pitch_bins: int = 64,
        kmax: int = 16,
        temperature: float = 0.1,
        hop: int = 384,
        lr0: float = 1e-3,
        decay: float = 0.75,
        patience: int = 3,
        batch: int = 4,
        epochs_max: int = 20,
        w_sisnr: float = 1.0,
        w_perc: float = 0.2,
        perc_bands: int = 24,
        seed: int = 0,
    ):
        self.pem_kind = pem_kind
        self.pem_width = pem_width
        self.n_refinements = n_refinements
        self.channels = channels
        self.pitch_min = pitch_min
        self.pitch_max = pitch_max
        self.pitch_bins = pitch_bins
        self.kmax = kmax
        self.temperature = temperature
        self.hop = hop
        self.lr0 = lr0
        self.decay = decay
        self.patience = patience
        self.batch = batch
        self.epochs_max = epochs_max
        self.w_sisnr = w_sisnr
        self.w_perc = w_perc
        self.perc_bands = perc_bands
        self.seed = seed

    # -- config plumbing ----------------------------------------------------

    def _config(self) -> Config:
        return Config(
            {
                "pem.kind": self.pem_kind,
                "pem.width": self.pem_width,
                "mri.n_refinements": self.n_refinements,
                "mri.channels": self.channels,
                "uie.pitch_min": self.pitch_min,
                "uie.pitch_max": self.pitch_max,
                "uie.pitch_bins": self.pitch_bins,
                "uie.kmax": self.kmax,
                "uie.temperature": self.temperature,
                "stft.hop": self.hop,
                "lr0": self.lr0,
                "decay": self.decay,
                "patience": self.patience,
                "batch": self.batch,
                "epochs_max": self.epochs_max,
                "w_sisnr": self.w_sisnr,
                "w_perc": self.w_perc,
                "perc_bands": self.perc_bands,
                "seed": self.seed,
            }
        )

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("RuiEnhancer is not fitted; call fit() or load().")

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y, val_fraction: float = 0.2):
        """Train on paired (noisy, clean) waveforms.

        X and y are sequences of equal-length 1-D arrays (or AudioClips).
        A deterministic tail split holds out validation pairs at the
        given fraction (at least one pair).
        """
        noisy = [_to_samples(x) for x in X]
        clean = [_to_samples(t) for t in y]
        if len(noisy) != len(clean) or not noisy:
            raise ShapeError("X and y must be equally sized, non-empty sequences")
        for nx, cx in zip(noisy, clean):
            if nx.shape != cx.shape:
                raise ShapeError("each noisy/clean pair must share a length")
            if nx.size < WINDOW_LEN:
                raise ShapeError(f"waveforms must be at least {WINDOW_LEN} samples")

        n_val = max(1, int(round(len(noisy) * val_fraction))) if len(noisy) > 1 else 1
        pairs = [
            (nx.astype(np.float32), cx.astype(np.float32)) for nx, cx in zip(noisy, clean)
        ]

        def provider(pair):
            return lambda: pair

        if len(pairs) == 1:
            train_rows = val_rows = [provider(pairs[0])]
        else:
            train_rows = [provider(p) for p in pairs[:-n_val]]
            val_rows = [provider(p) for p in pairs[-n_val:]]

        cfg = self._config()
        self.config_ = cfg
        self.model_ = build_model(cfg)
        result = train_loop(self.model_, cfg, train_rows, val_rows, out_dir=None)
        self.history_ = result.history
        self.best_val_loss_ = result.best_val_loss
        self.model_.eval()
        return self

    def transform(self, X):
        """Enhance a sequence of noisy waveforms; returns float64 arrays."""
        self._check_fitted()
        stft_cfg = StftConfig(hop=self.hop)
        out = []
        for x in X:
            clip = x if isinstance(x, AudioClip) else AudioClip(_to_samples(x), 16000)
            out.append(enhance_clip(self.model_, clip, stft_cfg).samples)
        return out

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y) -> float:
        """Mean SI-SDR (dB) of enhanced X against clean y."""
        enhanced = self.transform(X)
        scores = [si_sdr(_to_samples(c), e) for c, e in zip(y, enhanced)]
        return float(np.mean(scores))

    # -- persistence --------------------------------------------------------

    def save(self, path: str) -> None:
        self._check_fitted()
        save_model(path, self.model_, self.config_)

    def load(self, path: str) -> "RuiEnhancer":
        """Load a checkpoint; estimator params are reset to its config."""
        model, cfg = load_model(path)
        self.model_ = model
        self.config_ = cfg
        self.set_params(
            pem_kind=cfg["pem.kind"],
            pem_width=cfg["pem.width"],
            n_refinements=cfg["mri.n_refinements"],
            channels=cfg["mri.channels"],
            pitch_min=cfg["uie.pitch_min"],
            pitch_max=cfg["uie.pitch_max"],
            pitch_bins=cfg["uie.pitch_bins"],
            kmax=cfg["uie.kmax"],
            temperature=cfg["uie.temperature"],
            hop=cfg["stft.hop"],
            lr0=cfg["lr0"],
            decay=cfg["decay"],
            patience=cfg["patience"],
            batch=cfg["batch"],
            epochs_max=cfg["epochs_max"],
            w_sisnr=cfg["w_sisnr"],
            w_perc=cfg["w_perc"],
            perc_bands=cfg["perc_bands"],
            seed=cfg["seed"],
        )
        return self

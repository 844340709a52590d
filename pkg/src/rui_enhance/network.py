"""The full enhancement network: pre-enhancer, extractor, refinements.

Also provides the spectrum-level and waveform-level inference wrappers
used by the CLI and the evaluator.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .audio import AudioClip
from .compute import init_parameters, load_checkpoint, load_into_module, save_checkpoint
from .config import Config
from .errors import ShapeError
from .mri import RefinementLedger, RefineStack, refine
from .pem import build_pem
from .spectral import ComplexSpectrum, StftConfig, istft, stft
from .uie import HarmonicAttention, comb_matrix_from_config


class RuiNet(nn.Module):
    """Pre-enhancement -> harmonic attention -> iterative refinement."""

    def __init__(self, cfg: Config):
        super().__init__()
        comb = comb_matrix_from_config(cfg)
        comb_t = torch.tensor(comb.weights, dtype=torch.float32)
        self.pem = build_pem(cfg)
        self.uie = HarmonicAttention(comb, cfg["mri.channels"], cfg["uie.temperature"])
        self.mri = RefineStack(
            cfg["mri.n_refinements"], cfg["mri.channels"], comb_t, cfg["uie.temperature"]
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        p = self.pem(x)
        a = self.uie(x)
        output, _, _ = self.mri(p, a)
        return output

    def forward_detailed(
        self, x: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, list[torch.Tensor]]:
        """Returns (output, pre-enhanced p, corrections f_i)."""
        p = self.pem(x)
        a = self.uie(x)
        output, corrections, _ = self.mri(p, a)
        return output, p, corrections


def build_model(cfg: Config) -> RuiNet:
    """Construct and deterministically initialize the network.

    Refinement output projections stay at zero, so a fresh model equals
    its pre-enhancer exactly.
    """
    model = RuiNet(cfg)
    init_parameters(model, cfg["seed"])
    model.mri.zero_output_projections()
    return model


def save_model(path: str, model: RuiNet, cfg: Config) -> None:
    save_checkpoint(path, dict(model.named_parameters()), cfg.to_dict())


def load_model(path: str) -> tuple[RuiNet, Config]:
    state, cfg_dict = load_checkpoint(path)
    cfg = Config(cfg_dict)
    model = RuiNet(cfg)
    load_into_module(model, state)
    model.eval()
    return model, cfg


def spectrum_to_tensor(spec: ComplexSpectrum) -> torch.Tensor:
    return torch.tensor(spec.data, dtype=torch.float32)[None]


def tensor_to_spectrum(x: torch.Tensor) -> ComplexSpectrum:
    if x.dim() == 3:
        if x.shape[0] != 1:
            raise ShapeError("expected a single utterance")
        x = x[0]
    return ComplexSpectrum(x.detach().cpu().numpy().astype(np.float64))


def enhance_spectrum(model: RuiNet, spec: ComplexSpectrum) -> ComplexSpectrum:
    model.eval()
    with torch.no_grad():
        out = model(spectrum_to_tensor(spec))
    return tensor_to_spectrum(out)


def enhance_clip(model: RuiNet, clip: AudioClip, stft_cfg: StftConfig | None = None) -> AudioClip:
    """STFT -> network -> inverse STFT, preserving the input duration.

    The waveform is zero-padded by one window on each side before
    analysis and cropped back after synthesis, so every output sample
    lies in the region where overlap-add reconstruction is exact.
    """
    stft_cfg = stft_cfg or StftConfig()
    pad = stft_cfg.window_len
    padded = AudioClip(np.pad(clip.samples, (pad, pad)), clip.sample_rate_hz)
    spec = stft(padded, stft_cfg)
    enhanced = enhance_spectrum(model, spec)
    rec = istft(enhanced, stft_cfg, out_len=pad + len(clip))
    return AudioClip(rec.samples[pad : pad + len(clip)], clip.sample_rate_hz)


def ledger_for_clip(
    model: RuiNet, clip: AudioClip, stft_cfg: StftConfig | None = None
) -> tuple[RefinementLedger, ComplexSpectrum]:
    """Refinement ledger plus the noisy spectrum for a single utterance."""
    stft_cfg = stft_cfg or StftConfig()
    spec = stft(clip, stft_cfg)
    x = spectrum_to_tensor(spec)
    model.eval()
    with torch.no_grad():
        p = model.pem(x)
        a = model.uie(x)
    ledger = refine(p, a, model.mri)
    return ledger, spec

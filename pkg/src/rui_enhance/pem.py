"""Pre-enhancement variants: recurrent magnitude masking and a small CRN.

Both consume and produce (B, T, 2F) plane tensors, so the refinement
stage never branches on which variant is underneath.  Both are
time-causal with zero look-ahead.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import Config
from .errors import ConfigError, ShapeError
from .spectral import N_BINS
from .uie import CausalConv2d, planes_of

_LOG_FLOOR = 1e-10


class MaskPem(nn.Module):
    """Recurrent sigmoid mask on the magnitude; the noisy phase is kept.

    Two stacked recurrent layers over per-frame log10-magnitude features
    drive a per-bin mask in [0, 1]; output = mask * input, which scales
    the magnitude and leaves the phase untouched.
    """

    def __init__(self, n_bins: int = N_BINS, hidden: int = 128, width: int = 1):
        super().__init__()
        self.n_bins = n_bins
        self.rnn = nn.GRU(n_bins, hidden * width, num_layers=2, batch_first=True)
        self.head = nn.Linear(hidden * width, n_bins)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[-1] != 2 * self.n_bins:
            raise ShapeError(f"expected (batch, frames, {2 * self.n_bins}), got {tuple(x.shape)}")
        re, im = planes_of(x)
        mag = torch.sqrt(re * re + im * im)
        feats = torch.log10(torch.clamp(mag, min=_LOG_FLOOR))
        hidden, _ = self.rnn(feats)
        mask = torch.sigmoid(self.head(hidden))
        return torch.cat([mask * re, mask * im], dim=-1)


class CrnPem(nn.Module):
    """Causal conv encoder, one recurrent layer, mirrored decoder with skips.

    Estimates real and imaginary planes; the decoder output is applied as
    a correction on top of the input spectrum, which anchors training at
    small data scales.  Frequency sizes along the encoder are
    257 -> 129 -> 65 -> 33 (stride 2, kernel 5, pad 2); the transposed
    decoder mirrors them back exactly.
    """

    def __init__(self, n_bins: int = N_BINS, width: int = 1):
        super().__init__()
        self.n_bins = n_bins
        ch = [2, 8 * width, 16 * width, 32 * width]
        self.kernel = (3, 5)
        self.enc = nn.ModuleList(
            nn.Conv2d(ch[i], ch[i + 1], self.kernel, stride=(1, 2), padding=(0, 2))
            for i in range(3)
        )
        bottleneck_bins = n_bins
        for _ in range(3):
            bottleneck_bins = (bottleneck_bins - 1) // 2 + 1
        self.bottleneck = ch[3] * bottleneck_bins
        self.rnn = nn.GRU(self.bottleneck, 64 * width, batch_first=True)
        self.rnn_proj = nn.Linear(64 * width, self.bottleneck)
        self.dec = nn.ModuleList(
            nn.ConvTranspose2d(2 * ch[i + 1], ch[i] if i else 2, self.kernel, stride=(1, 2), padding=(0, 2))
            for i in reversed(range(3))
        )

    def _causal_pad(self, x: torch.Tensor) -> torch.Tensor:
        return torch.nn.functional.pad(x, (0, 0, self.kernel[0] - 1, 0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[-1] != 2 * self.n_bins:
            raise ShapeError(f"expected (batch, frames, {2 * self.n_bins}), got {tuple(x.shape)}")
        if x.shape[1] < 1:
            raise ShapeError("need at least one frame")
        frames = x.shape[1]
        re, im = planes_of(x)
        feat = torch.stack([re, im], dim=1)  # (B, 2, T, F)
        skips = []
        for layer in self.enc:
            # ELU keeps the graph C^1, which finite-difference checks need
            feat = torch.nn.functional.elu(layer(self._causal_pad(feat)))
            skips.append(feat)
        b, c, t, f = feat.shape
        seq = feat.permute(0, 2, 1, 3).reshape(b, t, c * f)
        seq, _ = self.rnn(seq)
        seq = self.rnn_proj(seq)
        feat = seq.reshape(b, t, c, f).permute(0, 2, 1, 3)
        for i, layer in enumerate(self.dec):
            feat = torch.cat([feat, skips[-1 - i]], dim=1)
            feat = layer(feat)[:, :, :frames, :]
            if i < len(self.dec) - 1:
                feat = torch.nn.functional.elu(feat)
        return x + torch.cat([feat[:, 0], feat[:, 1]], dim=-1)


def build_pem(cfg: Config) -> nn.Module:
    kind = cfg["pem.kind"]
    width = cfg["pem.width"]
    if kind == "mask":
        return MaskPem(width=width)
    if kind == "crn":
        return CrnPem(width=width)
    raise ConfigError(f"unknown pem.kind {kind!r}")


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())

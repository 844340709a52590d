"""Adam training loop with plateau learning-rate decay and checkpointing.

The learning rate starts at lr0 and is multiplied by the decay factor
whenever the validation loss fails to improve for `patience` consecutive
epochs.  The rate is recomputed as lr0 * decay^n so the schedule
invariant holds exactly after any event sequence.  Training is
single-threaded and fully deterministic given the seed.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .compute import save_checkpoint
from .config import Config
from .dataset import load_manifest, materialize
from .errors import InventoryError, NanError
from .network import RuiNet, build_model
from .objective import bark_band_matrix, perceptual_loss_t, si_snr_loss
from .spectral import StftConfig, istft_torch, stft_torch

GRAD_CLIP_NORM = 5.0

PairProvider = Callable[[], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    decay: float = 0.75
    patience: int = 3
    batch: int = 4
    epochs_max: int = 20
    seed: int = 0
    w_sisnr: float = 1.0
    w_perc: float = 0.2
    perc_bands: int = 24
    hop: int = 384

    @classmethod
    def from_config(cls, cfg: Config) -> "TrainConfig":
        return cls(
            lr0=cfg["lr0"],
            decay=cfg["decay"],
            patience=cfg["patience"],
            batch=cfg["batch"],
            epochs_max=cfg["epochs_max"],
            seed=cfg["seed"],
            w_sisnr=cfg["w_sisnr"],
            w_perc=cfg["w_perc"],
            perc_bands=cfg["perc_bands"],
            hop=cfg["stft.hop"],
        )


@dataclass(frozen=True)
class ScheduleState:
    lr0: float
    decay: float
    patience: int
    current_lr: float = field(default=0.0)
    best_val_loss: float = math.inf
    stagnant_epochs: int = 0
    n_decays: int = 0

    def __post_init__(self) -> None:
        if self.current_lr == 0.0:
            object.__setattr__(self, "current_lr", self.lr0 * self.decay**self.n_decays)


def lr_step(state: ScheduleState, val_loss: float) -> ScheduleState:
    """Advance the plateau schedule with one epoch's validation loss."""
    if not math.isfinite(val_loss):
        raise NanError(f"validation loss is not finite: {val_loss}")
    if val_loss < state.best_val_loss:
        return replace(state, best_val_loss=val_loss, stagnant_epochs=0)
    stagnant = state.stagnant_epochs + 1
    if stagnant >= state.patience:
        n = state.n_decays + 1
        return replace(
            state,
            stagnant_epochs=0,
            n_decays=n,
            current_lr=state.lr0 * state.decay**n,
        )
    return replace(state, stagnant_epochs=stagnant)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    wall_seconds: float

    def line(self) -> str:
        return (
            f"{self.epoch},{self.train_loss:.8e},{self.val_loss:.8e},"
            f"{self.lr:.8e},{self.wall_seconds:.3f}"
        )


@dataclass
class TrainResult:
    checkpoint_path: str | None
    log_path: str | None
    history: list[EpochLog]
    best_val_loss: float


class _LossComputer:
    """Auditory-constraint loss on (noisy, clean) waveform batches.

    Waveforms are zero-padded by one window before analysis and the
    estimate is cropped back, matching the inference path, so the loss
    never touches the edge region where overlap-add is ill-conditioned.
    """

    def __init__(self, tc: TrainConfig):
        self.tc = tc
        self.stft_cfg = StftConfig(hop=tc.hop)
        self.bands = torch.tensor(bark_band_matrix(tc.perc_bands), dtype=torch.float32)

    def __call__(self, model: RuiNet, noisy: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
        pad = self.stft_cfg.window_len
        length = noisy.shape[1]
        x = stft_torch(torch.nn.functional.pad(noisy, (pad, pad)), self.stft_cfg)
        est_spec = model(x)
        est_wave = istft_torch(est_spec, self.stft_cfg, out_len=pad + length)[:, pad : pad + length]
        loss = self.tc.w_sisnr * si_snr_loss(clean, est_wave)
        if self.tc.w_perc > 0:
            ref_spec = stft_torch(torch.nn.functional.pad(clean, (pad, pad)), self.stft_cfg)
            loss = loss + self.tc.w_perc * perceptual_loss_t(ref_spec, est_spec, self.bands)
        return loss


def _batched(providers: Sequence[PairProvider], order: np.ndarray, batch: int):
    for start in range(0, len(order), batch):
        chunk = order[start : start + batch]
        pairs = [providers[i]() for i in chunk]
        noisy = torch.tensor(np.stack([p[0] for p in pairs]), dtype=torch.float32)
        clean = torch.tensor(np.stack([p[1] for p in pairs]), dtype=torch.float32)
        yield noisy, clean


def train_loop(
    model: RuiNet,
    cfg: Config,
    train_rows: Sequence[PairProvider],
    val_rows: Sequence[PairProvider],
    out_dir: str | None = None,
    log_fn: Callable[[str], None] | None = None,
) -> TrainResult:
    """Optimize the model on provider-backed rows; see module docstring.

    Saves the best-validation checkpoint (if out_dir is given) and
    appends one log line per epoch.  Non-finite losses abort training
    with the last good checkpoint left on disk.
    """
    if not train_rows:
        raise InventoryError("no training rows")
    if not val_rows:
        raise InventoryError("no validation rows")
    tc = TrainConfig.from_config(cfg)
    torch.manual_seed(tc.seed)
    loss_fn = _LossComputer(tc)
    optimizer = torch.optim.Adam(model.parameters(), lr=tc.lr0, betas=(0.9, 0.999), eps=1e-8)
    state = ScheduleState(lr0=tc.lr0, decay=tc.decay, patience=tc.patience)

    ckpt_path = os.path.join(out_dir, "best.ckpt") if out_dir else None
    log_path = os.path.join(out_dir, "train_log.csv") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if log_path and not os.path.exists(log_path):
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,lr,wall_seconds\n")

    history: list[EpochLog] = []
    best_val = math.inf
    start_time = time.monotonic()
    for epoch in range(1, tc.epochs_max + 1):
        model.train()
        order = np.random.default_rng((tc.seed, epoch)).permutation(len(train_rows))
        total, count = 0.0, 0
        for noisy, clean in _batched(train_rows, order, tc.batch):
            optimizer.zero_grad()
            loss = loss_fn(model, noisy, clean)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NanError(
                    f"training loss became non-finite at epoch {epoch}; "
                    f"last good checkpoint retained{f' at {ckpt_path}' if ckpt_path else ''}"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
            optimizer.step()
            total += value * noisy.shape[0]
            count += noisy.shape[0]
        train_loss = total / count

        model.eval()
        vtotal, vcount = 0.0, 0
        with torch.no_grad():
            for noisy, clean in _batched(val_rows, np.arange(len(val_rows)), tc.batch):
                vtotal += float(loss_fn(model, noisy, clean)) * noisy.shape[0]
                vcount += noisy.shape[0]
        val_loss = vtotal / vcount

        entry = EpochLog(epoch, train_loss, val_loss, state.current_lr, time.monotonic() - start_time)
        history.append(entry)
        if log_path:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(entry.line() + "\n")
        if log_fn:
            log_fn(entry.line())

        if val_loss < best_val:
            best_val = val_loss
            if ckpt_path:
                save_checkpoint(ckpt_path, dict(model.named_parameters()), cfg.to_dict())
        state = lr_step(state, val_loss)
        for group in optimizer.param_groups:
            group["lr"] = state.current_lr

    return TrainResult(ckpt_path, log_path, history, best_val)


def manifest_providers(manifest_path: str, split: str) -> list[PairProvider]:
    """Lazy (noisy, clean) float32 providers for one manifest split."""
    rows = [r for r in load_manifest(manifest_path) if r.split == split]
    manifest_dir = os.path.dirname(os.path.abspath(manifest_path))

    def make(row):
        def provide() -> tuple[np.ndarray, np.ndarray]:
            noisy, clean, _ = materialize(row, manifest_dir)
            return (
                noisy.samples.astype(np.float32),
                clean.samples.astype(np.float32),
            )

        return provide

    return [make(r) for r in rows]


def train(cfg: Config, manifest_path: str, out_dir: str) -> TrainResult:
    """Manifest-level entry point: build the model and run the loop."""
    train_rows = manifest_providers(manifest_path, "train")
    val_rows = manifest_providers(manifest_path, "val")
    model = build_model(cfg)
    return train_loop(model, cfg, train_rows, val_rows, out_dir=out_dir)

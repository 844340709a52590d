"""Command-line entry point.

Subcommands: prepare, train, enhance, eval, viz, audit.  Logs go to
stderr; machine-readable artifacts (CSV, WAV, PGM) go to the paths given
by flags.  Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import torch

from . import dataset, objective, trainer
from .audio import load_wav, save_wav
from .config import Config, apply_overrides, default_config, load_config
from .errors import AuditError, InventoryError, RuiError
from .mri import audit_ledger
from .network import enhance_clip, ledger_for_clip, load_model, tensor_to_spectrum
from .spectral import ComplexSpectrum, StftConfig, export_spectrogram, stft

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        print(f"usage error: {message}", file=sys.stderr)
        print(self.format_usage(), file=sys.stderr, end="")
        raise SystemExit(USAGE_EXIT)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="K=V", help="override a config key")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> _Parser:
    parser = _Parser(prog="rui", description="Speech enhancement pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="synthesize a mixture manifest")
    _common_flags(p)
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--noise-dir", required=True)
    p.add_argument("--out", required=True, help="manifest CSV path")
    p.add_argument("--seconds", type=float, required=True)
    p.add_argument("--snr-lo", type=float, default=-5.0)
    p.add_argument("--snr-hi", type=float, default=20.0)
    p.add_argument("--split", choices=["trainval", "test"], default="trainval")

    p = sub.add_parser("train", help="train a model on a manifest")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for checkpoint and log")

    p = sub.add_parser("enhance", help="enhance WAV file(s) with a checkpoint")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True, help="input WAV file or directory")
    p.add_argument("--out", required=True, help="output WAV file or directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="metrics CSV path")

    p = sub.add_parser("viz", help="export spectrogram panels for one utterance")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True, help="input WAV file")
    p.add_argument("--out", required=True, help="output directory for PGM panels")

    p = sub.add_parser("audit", help="verify the refinement-ledger identities")
    _common_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True, help="input WAV file")
    return parser


def _effective_config(args) -> Config:
    cfg = load_config(args.config) if args.config else default_config()
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg = apply_overrides(cfg, [f"seed={args.seed}"])
    return cfg


def _report_config(cfg: Config) -> None:
    print("effective config:", file=sys.stderr)
    for k, v in sorted(cfg.to_dict().items()):
        print(f"  {k} = {v}", file=sys.stderr)


def _cmd_prepare(args, cfg: Config) -> int:
    rows = dataset.build_manifest(
        args.clean_dir,
        args.noise_dir,
        args.out,
        target_seconds=args.seconds,
        snr_range=(args.snr_lo, args.snr_hi),
        seed=cfg["seed"],
        split=args.split,
    )
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args, cfg: Config) -> int:
    result = trainer.train(cfg, args.manifest, args.out)
    for entry in result.history:
        print(entry.line(), file=sys.stderr)
    print(f"best validation loss {result.best_val_loss:.6f}", file=sys.stderr)
    print(f"checkpoint: {result.checkpoint_path}", file=sys.stderr)
    return 0


def _enhance_one(model, stft_cfg, in_path: str, out_path: str) -> None:
    clip = load_wav(in_path)
    save_wav(enhance_clip(model, clip, stft_cfg), out_path)


def _cmd_enhance(args, cfg: Config) -> int:
    model, model_cfg = load_model(args.checkpoint)
    stft_cfg = StftConfig(hop=model_cfg["stft.hop"])
    if os.path.isdir(args.input):
        names = sorted(f for f in os.listdir(args.input) if f.lower().endswith(".wav"))
        if not names:
            raise InventoryError(f"{args.input}: no WAV files")
        os.makedirs(args.out, exist_ok=True)
        for name in names:
            stem = name[:-4]
            out_path = os.path.join(args.out, stem + ".enh.wav")
            _enhance_one(model, stft_cfg, os.path.join(args.input, name), out_path)
            print(f"enhanced {name} -> {out_path}", file=sys.stderr)
    else:
        _enhance_one(model, stft_cfg, args.input, args.out)
        print(f"enhanced {args.input} -> {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args, cfg: Config) -> int:
    model, model_cfg = load_model(args.checkpoint)
    stft_cfg = StftConfig(hop=model_cfg["stft.hop"])
    rows = dataset.load_manifest(args.manifest)
    split = "test" if any(r.split == "test" for r in rows) else "val"
    rows = [r for r in rows if r.split == split]
    manifest_dir = os.path.dirname(os.path.abspath(args.manifest))

    def generate():
        for i, row in enumerate(rows):
            noisy, clean, _ = dataset.materialize(row, manifest_dir)
            yield f"{split}-{i:05d}", row.snr_db, noisy, clean

    table = objective.evaluate(generate(), lambda clip: enhance_clip(model, clip, stft_cfg), args.out)
    mean = table[-1]
    print(
        f"{len(table) - 1} utterances ({split}): SI-SDR {mean['si_sdr_noisy']:.2f} -> "
        f"{mean['si_sdr_enh']:.2f} dB, STOI {mean['stoi_noisy']:.4f} -> {mean['stoi_enh']:.4f}",
        file=sys.stderr,
    )
    print("PESQ: n/a", file=sys.stderr)
    return 0


def _cmd_viz(args, cfg: Config) -> int:
    model, model_cfg = load_model(args.checkpoint)
    stft_cfg = StftConfig(hop=model_cfg["stft.hop"])
    clip = load_wav(args.input)
    spec = stft(clip, stft_cfg)
    x = torch.tensor(spec.data, dtype=torch.float32)[None]
    model.eval()
    with torch.no_grad():
        output, p, corrections = model.forward_detailed(x)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    panels = [("noisy", spec), ("pem", tensor_to_spectrum(p))]
    panels += [(f"ref{i + 1}", tensor_to_spectrum(f)) for i, f in enumerate(corrections)]
    panels.append(("final", tensor_to_spectrum(output)))
    for name, panel_spec in panels:
        path = os.path.join(args.out, f"{stem}_{name}.pgm")
        export_spectrogram(panel_spec, path)
        print(f"wrote {path}", file=sys.stderr)
    return 0


def _cmd_audit(args, cfg: Config) -> int:
    model, model_cfg = load_model(args.checkpoint)
    stft_cfg = StftConfig(hop=model_cfg["stft.hop"])
    clip = load_wav(args.input)
    ledger, _ = ledger_for_clip(model, clip, stft_cfg)
    report = audit_ledger(ledger)
    print(report, file=sys.stderr)
    print(f"S-path identity: {'PASS' if report.passed else 'FAIL'}", file=sys.stderr)
    print(f"A-path identity: {'PASS' if report.passed else 'FAIL'}", file=sys.stderr)
    if not report.passed:
        raise AuditError("; ".join(report.failures))
    return 0


_COMMANDS = {
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
    "audit": _cmd_audit,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    torch.set_num_threads(max(1, int(os.environ.get("RUI_THREADS", "1"))))
    try:
        cfg = _effective_config(args)
        _report_config(cfg)
        np.random.seed(cfg["seed"] % 2**32)
        torch.manual_seed(cfg["seed"])
        return _COMMANDS[args.command](args, cfg)
    except (RuiError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


def main() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Monaural speech enhancement with harmonic attention and iterative refinement."""

from .audio import AudioClip, load_wav, save_wav
from .config import Config, default_config, load_config
from .estimator import RuiEnhancer
from .mri import RefinementLedger, audit_ledger
from .network import RuiNet, build_model, enhance_clip, load_model, save_model
from .objective import si_sdr, stoi
from .spectral import ComplexSpectrum, StftConfig, istft, stft

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "ComplexSpectrum",
    "Config",
    "RefinementLedger",
    "RuiEnhancer",
    "RuiNet",
    "StftConfig",
    "audit_ledger",
    "build_model",
    "default_config",
    "enhance_clip",
    "istft",
    "load_config",
    "load_model",
    "load_wav",
    "save_model",
    "save_wav",
    "si_sdr",
    "stft",
    "stoi",
    "__version__",
]

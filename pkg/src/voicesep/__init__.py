"""Monaural singing-voice separation with a recurrent masker/denoiser,
skip-filtering connections, and recurrent inference."""

from .autodiff import Parameter, Tape, Tensor
from .config import RunConfig, desk_profile, paper_profile
from .evaluate import EvalConfig, SeparationScore, median_report, sdr_sir
from .model import ForwardTrace, InferenceConfig, ModelParams, forward, \
    init_model_params
from .signal import AudioClip, StftConfig, read_wav, write_wav
from .training import LossConfig, SeparationResult, TrainingExample, \
    build_examples, compute_loss, gkl, separate, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "EvalConfig", "ForwardTrace", "InferenceConfig",
    "LossConfig", "ModelParams", "Parameter", "RunConfig",
    "SeparationResult", "SeparationScore", "StftConfig", "Tape", "Tensor",
    "TrainingExample", "build_examples", "compute_loss", "desk_profile",
    "forward", "gkl", "init_model_params", "median_report", "paper_profile",
    "read_wav", "sdr_sir", "separate", "train", "write_wav",
]

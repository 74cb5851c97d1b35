"""Training objective, dataset assembly, the epoch loop, and inference.

The loss follows the masker/denoiser split: a generalized-KL reconstruction
term on the denoised output, a gated KL term on the masked (pre-denoiser)
output, an L1 penalty on the mask head's main diagonal, and an L2 penalty on
the denoiser decoder weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .autodiff import Tape, Tensor, add, absolute, hadamard, log_eps, scale, \
    sub, sum_all
from .checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint, \
    save_checkpoint
from .config import SAMPLE_RATE, RunConfig
from .model import ForwardTrace, ModelParams, forward, init_model_params
from .nn import adam_step, clip_grad_norm
from .signal import AudioClip, griffin_lim, irm_target, istft, magnitude, \
    overlap_concat, read_wav, segment, slice_context, stft

GRIFFIN_LIM_ITERATIONS = 10


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class LossConfig:
    tau_rec: float = 1.5
    tau_min: float = 0.25
    lambda_mask: float = 1e-2
    lambda_dec: float = 1e-4
    kl_epsilon: float = 1e-12

    @classmethod
    def from_run(cls, cfg: RunConfig) -> "LossConfig":
        return cls(tau_rec=cfg.tau_rec, tau_min=cfg.tau_min,
                   lambda_mask=cfg.lambda_mask, lambda_dec=cfg.lambda_dec,
                   kl_epsilon=cfg.kl_epsilon)


@dataclass
class LossBreakdown:
    total: float
    kl_denoised: float
    kl_filtered: float
    lambda_rec: float


@dataclass
class TrainingExample:
    """One aligned subsequence: encoder input, skip input, sliced target."""

    mix_tr: np.ndarray   # T x F
    mix_in: np.ndarray   # T x N
    target: np.ndarray   # T' x N


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_lambda_rec: float
    mean_ri_iterations: float


@dataclass
class SeparationResult:
    voice: AudioClip
    ri_iterations: list[int]


def gkl(target: np.ndarray, estimate: Union[Tensor, np.ndarray],
        eps: float = 1e-12) -> Tensor:
    """Generalized KL divergence sum(a*ln((a+eps)/(b+eps)) - a + b).

    Differentiable with respect to ``estimate``; the target is a constant.
    """
    a = target.values if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    b = estimate if isinstance(estimate, Tensor) else Tensor(estimate)
    if a.shape != b.values.shape:
        raise ValueError(f"gkl: shapes differ, {a.shape} vs {b.values.shape}")
    if a.size and (a.min() < 0 or b.values.min() < 0):
        raise ValueError("gkl: inputs must be nonnegative")
    const = float((a * np.log(a + eps)).sum() - a.sum())
    cross = sum_all(hadamard(Tensor(a), log_eps(b, eps)))
    return add(sub(Tensor([[const]]), cross), sum_all(b))


_diag_mask_cache: dict[tuple[int, int], np.ndarray] = {}


def _diag_mask(shape: tuple[int, int]) -> np.ndarray:
    cached = _diag_mask_cache.get(shape)
    if cached is None:
        cached = np.eye(*shape)
        _diag_mask_cache[shape] = cached
    return cached


def compute_loss(target: np.ndarray, trace: ForwardTrace, params: ModelParams,
                 cfg: LossConfig) -> tuple[Tensor, LossBreakdown]:
    """Composite objective with the piecewise-constant reconstruction gate.

    The gate multiplies the masked-output KL term by 1 only while that term
    is at least tau_rec AND the denoised KL term is at least tau_min; the
    gate itself is evaluated on current values and carries no gradient.
    """
    eps = cfg.kl_epsilon
    kl_denoised = gkl(target, trace.denoised, eps)
    kl_filtered = gkl(target, trace.filtered, eps)
    kl_den_value = kl_denoised.item()
    kl_filt_value = kl_filtered.item()
    lambda_rec = 1.0 if (kl_filt_value >= cfg.tau_rec
                         and kl_den_value >= cfg.tau_min) else 0.0
    loss = add(kl_denoised, kl_filtered) if lambda_rec else kl_denoised

    tape = trace.denoised.tape
    w_mask = tape.watch(params.masker.w_mask) if tape is not None \
        else Tensor(params.masker.w_mask.values)
    w_dec = tape.watch(params.denoiser.w_dec) if tape is not None \
        else Tensor(params.denoiser.w_dec.values)
    diag = Tensor(_diag_mask(params.masker.w_mask.shape))
    reg_mask = scale(sum_all(hadamard(absolute(w_mask), diag)), cfg.lambda_mask)
    reg_dec = scale(sum_all(hadamard(w_dec, w_dec)), cfg.lambda_dec)
    loss = add(loss, add(reg_mask, reg_dec))
    return loss, LossBreakdown(total=loss.item(), kl_denoised=kl_den_value,
                               kl_filtered=kl_filt_value, lambda_rec=lambda_rec)


def build_examples(voice: AudioClip, accomp: AudioClip,
                   cfg: RunConfig) -> list[TrainingExample]:
    """Mix the stems, build the x2 ideal-ratio-mask target, and segment."""
    if voice.sample_rate != accomp.sample_rate:
        raise ValueError(f"stem sample rates differ: {voice.sample_rate} vs "
                         f"{accomp.sample_rate}")
    if voice.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz stems, got {voice.sample_rate} Hz")
    n = min(len(voice), len(accomp))
    v = voice.samples[:n]
    a = accomp.samples[:n]
    scfg = cfg.stft_config()
    mix_mag = magnitude(stft(AudioClip(v + a, SAMPLE_RATE), scfg))
    voice_mag = magnitude(stft(AudioClip(v, SAMPLE_RATE), scfg))
    accomp_mag = magnitude(stft(AudioClip(a, SAMPLE_RATE), scfg))
    target = irm_target(voice_mag, accomp_mag, mix_mag, eps=cfg.kl_epsilon)
    mix_batch = segment(mix_mag, cfg.seq_len, cfg.context, cfg.low_bands)
    target_batch = segment(target, cfg.seq_len, cfg.context, cfg.low_bands)
    return [TrainingExample(mix_tr=mix_batch.trunc_input[b],
                            mix_in=mix_batch.full_input[b],
                            target=slice_context(target_batch.full_input[b],
                                                 cfg.context))
            for b in range(len(mix_batch))]


def load_track_pair(track_dir: Path) -> tuple[AudioClip, AudioClip]:
    """Load one corpus track: vocals.wav plus accompaniment.wav, or the
    bass/drums/other stems summed into an accompaniment."""
    track_dir = Path(track_dir)
    vocals = read_wav(track_dir / "vocals.wav")
    accomp_path = track_dir / "accompaniment.wav"
    if accomp_path.exists():
        return vocals, read_wav(accomp_path)
    stems = []
    for stem in ("bass.wav", "drums.wav", "other.wav"):
        path = track_dir / stem
        if not path.exists():
            raise FileNotFoundError(
                f"{track_dir}: need accompaniment.wav or bass/drums/other stems, "
                f"missing {stem}")
        stems.append(read_wav(path))
    rates = {s.sample_rate for s in stems}
    if len(rates) != 1:
        raise ValueError(f"{track_dir}: stem sample rates differ: {sorted(rates)}")
    n = min(len(s) for s in stems)
    summed = np.sum([s.samples[:n] for s in stems], axis=0)
    return vocals, AudioClip(summed, stems[0].sample_rate)


def discover_tracks(corpus_dir: Path) -> list[Path]:
    """Track directories under ``corpus_dir`` (anything with a vocals.wav)."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus_dir}")
    return sorted(d for d in corpus_dir.iterdir()
                  if d.is_dir() and (d / "vocals.wav").exists())


def _checkpoint_blob(cfg: RunConfig, epoch: int, rng: np.random.Generator) -> str:
    state = rng.bit_generator.state
    lines = [cfg.to_text(), f"epoch = {epoch}\n"]
    lines.append(f"rng.state = {state['state']['state']}\n")
    lines.append(f"rng.inc = {state['state']['inc']}\n")
    lines.append(f"rng.has_uint32 = {state['has_uint32']}\n")
    lines.append(f"rng.uinteger = {state['uinteger']}\n")
    return "".join(lines)


def _restore_rng(config: dict[str, str]) -> np.random.Generator:
    bit_gen = np.random.PCG64()
    bit_gen.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(config["rng.state"]), "inc": int(config["rng.inc"])},
        "has_uint32": int(config["rng.has_uint32"]),
        "uinteger": int(config["rng.uinteger"]),
    }
    return np.random.Generator(bit_gen)


def train(tracks: Sequence[tuple[AudioClip, AudioClip]], cfg: RunConfig, *,
          out_path: Optional[Path] = None,
          resume: Union[Checkpoint, Path, None] = None,
          on_epoch: Optional[Callable[[EpochStats], None]] = None,
          ) -> tuple[ModelParams, list[EpochStats]]:
    """Run the optimization loop over all subsequences of all tracks.

    Examples are reshuffled every epoch with the seeded generator. Each batch
    runs one forward/backward per example (the per-example gate needs its own
    KL values), clips the joint gradient norm, and takes one Adam step. A
    checkpoint is written to ``out_path`` after every epoch.
    """
    if not tracks:
        raise ValueError("empty corpus: no training tracks")
    examples: list[TrainingExample] = []
    for voice, accomp in tracks:
        examples.extend(build_examples(voice, accomp, cfg))
    loss_cfg = LossConfig.from_run(cfg)
    infer_cfg = cfg.inference_config()

    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        params = model_from_checkpoint(ckpt, cfg)
        rng = _restore_rng(ckpt.config)
        start_epoch = ckpt.epoch
    else:
        rng = np.random.default_rng(cfg.seed)
        params = init_model_params(cfg.low_bands, cfg.n_bins, rng)
        start_epoch = 0

    all_params = params.parameters()
    history: list[EpochStats] = []
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        order = rng.permutation(len(examples))
        loss_sum = 0.0
        lambda_sum = 0.0
        iter_sum = 0.0
        for begin in range(0, len(order), cfg.batch_size):
            chunk = order[begin:begin + cfg.batch_size]
            inv = 1.0 / len(chunk)
            for idx in chunk:
                ex = examples[idx]
                tape = Tape()
                trace = forward(ex.mix_tr, ex.mix_in, params, infer_cfg,
                                cfg.context, tape)
                loss, info = compute_loss(ex.target, trace, params, loss_cfg)
                if not np.isfinite(info.total):
                    raise TrainingDiverged(
                        f"non-finite loss {info.total} at epoch {epoch} "
                        f"(kl_denoised={info.kl_denoised}, "
                        f"kl_filtered={info.kl_filtered})")
                tape.backward(scale(loss, inv))
                loss_sum += info.total
                lambda_sum += info.lambda_rec
                iter_sum += trace.ri_iterations_used
            clip_grad_norm(all_params, cfg.clip_norm)
            adam_step(all_params, lr=cfg.learning_rate)
        n_seen = len(order)
        stats = EpochStats(epoch=epoch, mean_loss=loss_sum / n_seen,
                           mean_lambda_rec=lambda_sum / n_seen,
                           mean_ri_iterations=iter_sum / n_seen)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
        if out_path is not None:
            save_checkpoint(out_path, params, _checkpoint_blob(cfg, epoch, rng))
    if out_path is not None and not history:
        # resumed past the final epoch: still leave a checkpoint behind
        save_checkpoint(out_path, params, _checkpoint_blob(cfg, start_epoch, rng))
    return params, history


def separate(mixture: AudioClip, params: ModelParams,
             cfg: RunConfig) -> SeparationResult:
    """Full inference chain from a mixture to the estimated voice signal.

    STFT -> segment -> model per subsequence -> concatenate -> Griffin-Lim
    (seeded with the mixture phase) -> inverse STFT, trimmed to the input
    length.
    """
    if mixture.sample_rate != SAMPLE_RATE:
        raise ValueError(f"separate expects {SAMPLE_RATE} Hz input, got "
                         f"{mixture.sample_rate} Hz")
    scfg = cfg.stft_config()
    infer_cfg = cfg.inference_config()
    spec = stft(mixture, scfg)
    mag = magnitude(spec)
    phase = np.angle(spec)
    batch = segment(mag, cfg.seq_len, cfg.context, cfg.low_bands)
    blocks = []
    iterations = []
    for b in range(len(batch)):
        trace = forward(batch.trunc_input[b], batch.full_input[b], params,
                        infer_cfg, cfg.context)
        blocks.append(trace.denoised.values)
        iterations.append(trace.ri_iterations_used)
    estimate = overlap_concat(blocks, batch.frame_count)
    voiced = griffin_lim(estimate, phase, GRIFFIN_LIM_ITERATIONS, scfg,
                         mixture.sample_rate)
    samples = istft(voiced, scfg, mixture.sample_rate).samples
    n = len(mixture)
    if samples.size >= n:
        samples = samples[:n]
    else:
        samples = np.concatenate([samples, np.zeros(n - samples.size)])
    return SeparationResult(voice=AudioClip(samples, mixture.sample_rate),
                            ri_iterations=iterations)

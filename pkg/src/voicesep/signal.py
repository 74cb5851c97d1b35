"""Time-frequency front/back end: WAV I/O, STFT, segmentation, Griffin-Lim.

All functions are pure and operate on float64 numpy arrays. Spectrograms are
laid out frames x bins (M x N), matching the orientation the model consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.io import wavfile


class AudioFormatError(Exception):
    """Raised for WAV encodings outside the supported PCM16/float32 set."""


@dataclass
class AudioClip:
    """Mono audio: float64 samples (nominally in [-1, 1]) plus a sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioClip samples must be 1-D, got {self.samples.ndim}-D")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.isfinite(self.samples).all():
            raise ValueError("AudioClip samples contain NaN or Inf")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class StftConfig:
    """Analysis parameters: window/FFT lengths in samples, hop in samples."""

    win_len: int = 2049
    fft_len: int = 4096
    hop: int = 384
    window: str = "hamming"

    def __post_init__(self):
        if not (0 < self.hop <= self.win_len <= self.fft_len):
            raise ValueError(
                f"need 0 < hop <= win_len <= fft_len, got hop={self.hop}, "
                f"win_len={self.win_len}, fft_len={self.fft_len}")
        if self.window != "hamming":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    def window_values(self) -> np.ndarray:
        # symmetric Hamming spanning the full frame
        return np.hamming(self.win_len)


@dataclass
class SequenceBatch:
    """Fixed-length subsequences cut from a spectrogram for the model.

    ``full_input[b]`` is T x N (skip-connection view), ``trunc_input[b]`` is
    T x F (encoder view). Consecutive subsequences overlap by 2 * context
    frames; after context removal their outputs tile the original
    ``frame_count`` frames exactly.
    """

    full_input: list[np.ndarray] = field(default_factory=list)
    trunc_input: list[np.ndarray] = field(default_factory=list)
    frame_count: int = 0
    seq_len: int = 0
    context: int = 0

    def __len__(self) -> int:
        return len(self.full_input)


def read_wav(path) -> AudioClip:
    """Read a PCM16 or IEEE float32 WAV as a mono clip scaled to [-1, 1].

    Multi-channel files are averaged across channels sample-wise.
    """
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"{path}: unsupported sample format {data.dtype}; "
            "expected PCM16 or IEEE float32")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples, int(rate))


def write_wav(clip: AudioClip, path) -> None:
    """Write the clip as an IEEE float32 WAV (values are not clamped)."""
    wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))


def _frame_count(n_samples: int, cfg: StftConfig) -> int:
    if n_samples <= cfg.win_len:
        return 1
    return 1 + math.ceil((n_samples - cfg.win_len) / cfg.hop)


def stft(clip: AudioClip, cfg: StftConfig) -> np.ndarray:
    """Hamming-windowed STFT, frames x bins, positive frequencies only.

    The tail of the signal is zero-padded so the last partial frame is
    analyzed too; M = 1 + ceil((len - win_len) / hop).
    """
    x = clip.samples
    if x.size == 0:
        raise ValueError("stft: empty clip")
    if x.size < cfg.hop:
        raise ValueError(f"stft: clip of {x.size} samples is shorter than one "
                         f"hop ({cfg.hop}); too short to frame")
    m = _frame_count(x.size, cfg)
    padded_len = (m - 1) * cfg.hop + cfg.win_len
    padded = np.zeros(padded_len)
    padded[:x.size] = x
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(m)[:, None]
    frames = padded[idx] * cfg.window_values()
    return np.fft.rfft(frames, n=cfg.fft_len, axis=1)


def istft(spec: np.ndarray, cfg: StftConfig, sample_rate: int = 44100) -> AudioClip:
    """Least-squares overlap-add inverse of :func:`stft`.

    Each frame is inverse-transformed, truncated to win_len, weighted by the
    analysis window, overlap-added, and finally divided by the accumulated
    squared-window envelope (entries below 1e-10 are left undivided). The
    output has the padded analysis length (M - 1) * hop + win_len.
    """
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ValueError(f"istft: expected (M, {cfg.n_bins}) spectrogram, "
                         f"got {spec.shape}")
    m = spec.shape[0]
    frames = np.fft.irfft(spec, n=cfg.fft_len, axis=1)[:, :cfg.win_len]
    win = cfg.window_values()
    out_len = (m - 1) * cfg.hop + cfg.win_len
    out = np.zeros(out_len)
    envelope = np.zeros(out_len)
    win_sq = win * win
    for i in range(m):
        start = i * cfg.hop
        out[start:start + cfg.win_len] += frames[i] * win
        envelope[start:start + cfg.win_len] += win_sq
    covered = envelope > 1e-10
    out[covered] /= envelope[covered]
    return AudioClip(out, sample_rate)


def magnitude(spec: np.ndarray) -> np.ndarray:
    """Elementwise complex modulus."""
    return np.abs(spec)


def truncate_bands(mag: np.ndarray, n_low_bands: int) -> np.ndarray:
    """Keep only the first ``n_low_bands`` frequency columns of each frame."""
    if n_low_bands > mag.shape[1]:
        raise ValueError(f"truncate_bands: {n_low_bands} > {mag.shape[1]} bins")
    return np.ascontiguousarray(mag[:, :n_low_bands])


def slice_context(x: np.ndarray, context: int) -> np.ndarray:
    """Drop ``context`` leading and trailing rows, keeping T - 2*context rows."""
    t = x.shape[0]
    if t <= 2 * context:
        raise ValueError(f"slice_context: need T > 2L, got T={t}, L={context}")
    return np.ascontiguousarray(x[context:t - context])


def segment(mag: np.ndarray, seq_len: int, context: int,
            n_low_bands: int) -> SequenceBatch:
    """Cut a spectrogram into overlapping T-frame subsequences.

    The matrix is padded with ``context`` leading zero frames (plus trailing
    zeros) so that subsequences placed every T' = T - 2*context frames cover
    all M original frames once context removal is applied.
    """
    if seq_len <= 2 * context:
        raise ValueError(f"segment: need T > 2L, got T={seq_len}, L={context}")
    m, n = mag.shape
    if n_low_bands > n:
        raise ValueError(f"segment: F={n_low_bands} > {n} bins")
    hop = seq_len - 2 * context
    n_seqs = -(-m // hop)  # ceil
    padded = np.zeros((n_seqs * hop + 2 * context, n))
    padded[context:context + m] = mag
    batch = SequenceBatch(frame_count=m, seq_len=seq_len, context=context)
    for b in range(n_seqs):
        window = padded[b * hop: b * hop + seq_len]
        batch.full_input.append(np.ascontiguousarray(window))
        batch.trunc_input.append(np.ascontiguousarray(window[:, :n_low_bands]))
    return batch


def overlap_concat(estimates: Sequence[np.ndarray], frame_count: int) -> np.ndarray:
    """Stitch de-contexted model outputs back into an M x N spectrogram."""
    stacked = np.vstack(list(estimates))
    if stacked.shape[0] < frame_count:
        raise ValueError(f"overlap_concat: only {stacked.shape[0]} frames for "
                         f"{frame_count} requested")
    return np.ascontiguousarray(stacked[:frame_count])


def griffin_lim(mag: np.ndarray, init_phase: np.ndarray, iters: int,
                cfg: StftConfig, sample_rate: int = 44100) -> np.ndarray:
    """Phase reconstruction by alternating STFT projections.

    Starting from ``init_phase``, each iteration resynthesizes the signal and
    replaces the phase with the reanalyzed one while keeping ``mag`` fixed.
    Returns the complex spectrogram mag * exp(i * phase_final).
    """
    if iters < 0:
        raise ValueError("griffin_lim: iters must be >= 0")
    if mag.shape != init_phase.shape:
        raise ValueError(f"griffin_lim: magnitude {mag.shape} vs "
                         f"phase {init_phase.shape}")
    spec = mag * np.exp(1j * init_phase)
    for _ in range(iters):
        reanalyzed = stft(istft(spec, cfg, sample_rate), cfg)
        spec = mag * np.exp(1j * np.angle(reanalyzed))
    return spec


def wiener_mask(source_mags: Sequence[np.ndarray], source_index: int,
                alpha: float = 2.0, eps: float = 1e-12) -> np.ndarray:
    """Generalized Wiener mask from alpha-power magnitudes of all sources.

    Bins where the summed alpha-power falls below ``eps`` get the
    uninformative value 1 / n_sources.
    """
    if alpha <= 0:
        raise ValueError("wiener_mask: alpha must be positive")
    mags = [np.asarray(m, dtype=np.float64) for m in source_mags]
    shape = mags[0].shape
    for m in mags:
        if m.shape != shape:
            raise ValueError(f"wiener_mask: source shapes differ, {m.shape} vs {shape}")
    powered = [m ** alpha for m in mags]
    denom = np.sum(powered, axis=0)
    out = np.full(shape, 1.0 / len(mags))
    defined = denom >= eps
    out[defined] = powered[source_index][defined] / denom[defined]
    return out


def irm_target(voice_mag: np.ndarray, accomp_mag: np.ndarray,
               mix_mag: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Training target: twice the ideal ratio mask applied to the mixture."""
    if not (voice_mag.shape == accomp_mag.shape == mix_mag.shape):
        raise ValueError("irm_target: shapes differ")
    return 2.0 * (voice_mag / (voice_mag + accomp_mag + eps)) * mix_mag

"""The Masker (residual bi-GRU encoder, recurrent-inference decoder, mask
head, skip-filtering) and the Denoiser, composed into one differentiable
forward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Parameter, Tape, Tensor, add, add_bias, concat_cols, \
    hadamard, matmul, relu, reverse_rows, slice_rows
from .nn import GruParams, gru_sequence, init_glorot_normal, init_gru
from .signal import slice_context


@dataclass
class MaskerParams:
    """Bi-GRU encoder (F -> F each direction), decoder GRU (2F -> 2F), and
    the mask head expanding 2F back to the full band count."""

    enc_fwd: GruParams
    enc_bwd: GruParams
    dec: GruParams
    w_mask: Parameter
    b_mask: Parameter

    @property
    def low_bands(self) -> int:
        return self.enc_fwd.input_dim

    @property
    def full_bands(self) -> int:
        return self.w_mask.shape[1]

    def parameters(self) -> list[Parameter]:
        return (self.enc_fwd.parameters() + self.enc_bwd.parameters()
                + self.dec.parameters() + [self.w_mask, self.b_mask])


@dataclass
class DenoiserParams:
    """Feed-forward encoder/decoder pair applied per frame, N -> N//2 -> N."""

    w_enc: Parameter
    b_enc: Parameter
    w_dec: Parameter
    b_dec: Parameter

    def parameters(self) -> list[Parameter]:
        return [self.w_enc, self.b_enc, self.w_dec, self.b_dec]


@dataclass
class ModelParams:
    masker: MaskerParams
    denoiser: DenoiserParams

    def parameters(self) -> list[Parameter]:
        return self.masker.parameters() + self.denoiser.parameters()

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        return [(p.name, p) for p in self.parameters()]


@dataclass
class InferenceConfig:
    """Recurrent-inference settings for the decoder."""

    use_recurrent_inference: bool = True
    max_iter: int = 10
    tau_term: float = 1e-3

    def __post_init__(self):
        if self.use_recurrent_inference and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1 when recurrent inference is on")
        if self.tau_term < 0:
            raise ValueError("tau_term must be >= 0")


@dataclass
class ForwardTrace:
    """Outputs of one subsequence forward: all T' x N and nonnegative."""

    mask: Tensor
    filtered: Tensor
    denoised: Tensor
    ri_iterations_used: int


def init_model_params(low_bands: int, full_bands: int,
                      rng: np.random.Generator) -> ModelParams:
    """Fresh weights: orthogonal recurrent, Glorot-normal dense, zero biases."""
    half = full_bands // 2
    masker = MaskerParams(
        enc_fwd=init_gru(low_bands, low_bands, rng, name="masker.enc_fwd"),
        enc_bwd=init_gru(low_bands, low_bands, rng, name="masker.enc_bwd"),
        dec=init_gru(2 * low_bands, 2 * low_bands, rng, name="masker.dec"),
        w_mask=Parameter(init_glorot_normal(2 * low_bands, full_bands, rng),
                         name="masker.w_mask"),
        b_mask=Parameter(np.zeros((1, full_bands)), name="masker.b_mask"),
    )
    denoiser = DenoiserParams(
        w_enc=Parameter(init_glorot_normal(full_bands, half, rng),
                        name="denoiser.w_enc"),
        b_enc=Parameter(np.zeros((1, half)), name="denoiser.b_enc"),
        w_dec=Parameter(init_glorot_normal(half, full_bands, rng),
                        name="denoiser.w_dec"),
        b_dec=Parameter(np.zeros((1, full_bands)), name="denoiser.b_dec"),
    )
    return ModelParams(masker=masker, denoiser=denoiser)


def encode(y_tr: Tensor, p: MaskerParams, context: int,
           tape: Optional[Tape] = None) -> Tensor:
    """Residual bi-GRU encoding followed by context removal.

    Row t of the result is [h_t + y_t, hb_t + y_{T+1-t}] where hb is the
    backward GRU run over the reversed rows; the leading and trailing
    ``context`` rows are then dropped.
    """
    fwd = add(gru_sequence(y_tr, p.enc_fwd, tape), y_tr)
    bwd = add(gru_sequence(y_tr, p.enc_bwd, tape, reverse=True), y_tr)
    h_enc = concat_cols(fwd, reverse_rows(bwd))
    return slice_rows(h_enc, context, y_tr.rows - context)


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float((d * d).mean())


def recurrent_inference(h_enc: Tensor, p: MaskerParams, cfg: InferenceConfig,
                        tape: Optional[Tape] = None) -> tuple[Tensor, int]:
    """Re-apply the decoder to its own output until consecutive states stop
    moving (MSE below tau_term) or max_iter is reached.

    Returns the final decoder state and the number of loop iterations
    executed (0 when recurrent inference is disabled). Each decoder
    application starts from a fresh zero state; the termination test is
    control flow only and carries no gradient.
    """
    state = gru_sequence(h_enc, p.dec, tape)
    if not cfg.use_recurrent_inference:
        return state, 0
    h_dec = state
    for i in range(1, cfg.max_iter + 1):
        h_dec = gru_sequence(state, p.dec, tape)
        if _mse(state.values, h_dec.values) < cfg.tau_term:
            return h_dec, i
        state = h_dec
    return h_dec, cfg.max_iter


def predict_mask(h_dec: Tensor, p: MaskerParams,
                 tape: Optional[Tape] = None) -> Tensor:
    """Sparsifying mask head: ReLU(h_dec @ W_mask + b_mask)."""
    w = tape.watch(p.w_mask) if tape is not None else Tensor(p.w_mask.values)
    b = tape.watch(p.b_mask) if tape is not None else Tensor(p.b_mask.values)
    return relu(add_bias(matmul(h_dec, w), b))


def skip_filter(y_in_sliced: Tensor, mask: Tensor) -> Tensor:
    """Apply the mask to the full-band input magnitude elementwise."""
    return hadamard(y_in_sliced, mask)


def denoise(y_filt: Tensor, p: DenoiserParams,
            tape: Optional[Tape] = None) -> Tensor:
    """Multiplicative enhancement:
    ReLU(ReLU(y @ W_enc + b_enc) @ W_dec + b_dec) * y."""
    if tape is not None:
        w_enc, b_enc = tape.watch(p.w_enc), tape.watch(p.b_enc)
        w_dec, b_dec = tape.watch(p.w_dec), tape.watch(p.b_dec)
    else:
        w_enc, b_enc = Tensor(p.w_enc.values), Tensor(p.b_enc.values)
        w_dec, b_dec = Tensor(p.w_dec.values), Tensor(p.b_dec.values)
    hidden = relu(add_bias(matmul(y_filt, w_enc), b_enc))
    gain = relu(add_bias(matmul(hidden, w_dec), b_dec))
    return hadamard(gain, y_filt)


def forward(y_tr: np.ndarray, y_in: np.ndarray, params: ModelParams,
            cfg: InferenceConfig, context: int,
            tape: Optional[Tape] = None) -> ForwardTrace:
    """Full Masker + Denoiser pass over one (T x F, T x N) subsequence pair."""
    if y_tr.shape[0] != y_in.shape[0]:
        raise ValueError(f"forward: frame counts differ, {y_tr.shape} vs {y_in.shape}")
    x_tr = Tensor(y_tr)
    x_in = Tensor(slice_context(y_in, context))
    h_enc = encode(x_tr, params.masker, context, tape)
    h_dec, used = recurrent_inference(h_enc, params.masker, cfg, tape)
    mask = predict_mask(h_dec, params.masker, tape)
    filtered = skip_filter(x_in, mask)
    denoised = denoise(filtered, params.denoiser, tape)
    return ForwardTrace(mask=mask, filtered=filtered, denoised=denoised,
                        ri_iterations_used=used)

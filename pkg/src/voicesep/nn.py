"""GRU layers, weight initializers, Adam, and gradient-norm clipping.

Everything here works on the tape tensors from :mod:`voicesep.autodiff`;
passing ``tape=None`` runs the same math as plain constants, which is what
inference uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .autodiff import (
    Parameter,
    Tape,
    Tensor,
    add,
    add_bias,
    concat_rows,
    hadamard,
    matmul,
    reverse_rows,
    sigmoid,
    slice_rows,
    sub,
    tanh,
)


@dataclass
class GruParams:
    """Weights of one GRU: update gate z, reset gate r, candidate h.

    w_* map the input (input_dim x hidden_dim), u_* map the previous state
    (hidden_dim x hidden_dim), b_* are 1 x hidden_dim bias rows.
    """

    w_z: Parameter
    w_r: Parameter
    w_h: Parameter
    u_z: Parameter
    u_r: Parameter
    u_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h,
                self.b_z, self.b_r, self.b_h]


def init_orthogonal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Random matrix with orthonormal columns (or rows if cols > rows)."""
    if rows <= 0 or cols <= 0:
        raise ValueError("init_orthogonal: dimensions must be positive")
    tall = rows >= cols
    a = rng.standard_normal((rows, cols) if tall else (cols, rows))
    q, r = np.linalg.qr(a)
    # fix the sign ambiguity of QR so the result is a deterministic function
    # of the rng draws
    q = q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    return q if tall else q.T


def init_glorot_normal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Normal entries with std sqrt(2 / (rows + cols))."""
    if rows <= 0 or cols <= 0:
        raise ValueError("init_glorot_normal: dimensions must be positive")
    std = np.sqrt(2.0 / (rows + cols))
    return rng.standard_normal((rows, cols)) * std


def init_gru(input_dim: int, hidden_dim: int, rng: np.random.Generator,
             name: str = "gru") -> GruParams:
    """Glorot-normal input weights, orthogonal recurrent weights, zero biases."""
    def w(suffix):
        return Parameter(init_glorot_normal(input_dim, hidden_dim, rng),
                         name=f"{name}.w_{suffix}")

    def u(suffix):
        return Parameter(init_orthogonal(hidden_dim, hidden_dim, rng),
                         name=f"{name}.u_{suffix}")

    def b(suffix):
        return Parameter(np.zeros((1, hidden_dim)), name=f"{name}.b_{suffix}")

    return GruParams(w_z=w("z"), w_r=w("r"), w_h=w("h"),
                     u_z=u("z"), u_r=u("r"), u_h=u("h"),
                     b_z=b("z"), b_r=b("r"), b_h=b("h"))


def _leaf(tape: Optional[Tape], param: Parameter) -> Tensor:
    return tape.watch(param) if tape is not None else Tensor(param.values)


def gru_step(x_t: Tensor, h_prev: Tensor, p: GruParams,
             tape: Optional[Tape] = None) -> Tensor:
    """One GRU update: h_t = (1 - z) * h_prev + z * tanh-candidate."""
    w_z, w_r, w_h = _leaf(tape, p.w_z), _leaf(tape, p.w_r), _leaf(tape, p.w_h)
    u_z, u_r, u_h = _leaf(tape, p.u_z), _leaf(tape, p.u_r), _leaf(tape, p.u_h)
    b_z, b_r, b_h = _leaf(tape, p.b_z), _leaf(tape, p.b_r), _leaf(tape, p.b_h)
    z = sigmoid(add(add_bias(matmul(x_t, w_z), b_z), matmul(h_prev, u_z)))
    r = sigmoid(add(add_bias(matmul(x_t, w_r), b_r), matmul(h_prev, u_r)))
    cand = tanh(add(add_bias(matmul(x_t, w_h), b_h),
                    matmul(hadamard(r, h_prev), u_h)))
    one = Tensor(np.ones_like(h_prev.values))
    return add(hadamard(sub(one, z), h_prev), hadamard(z, cand))


def gru_sequence(x: Tensor, p: GruParams, tape: Optional[Tape] = None,
                 reverse: bool = False) -> Tensor:
    """Run the GRU over the rows of ``x`` from a zero initial state.

    With ``reverse=True`` the recurrence consumes the rows last-to-first and
    the output is flipped back, so row t of the result always corresponds to
    input row t.

    The per-gate input projections are hoisted out of the time loop (one
    matmul over the whole sequence per gate); the recurrence itself matches
    :func:`gru_step` to float rounding.
    """
    if x.cols != p.input_dim:
        raise ValueError(f"gru_sequence: input width {x.cols} != {p.input_dim}")
    seq = reverse_rows(x) if reverse else x
    w_z, w_r, w_h = _leaf(tape, p.w_z), _leaf(tape, p.w_r), _leaf(tape, p.w_h)
    u_z, u_r, u_h = _leaf(tape, p.u_z), _leaf(tape, p.u_r), _leaf(tape, p.u_h)
    b_z, b_r, b_h = _leaf(tape, p.b_z), _leaf(tape, p.b_r), _leaf(tape, p.b_h)
    in_z = add_bias(matmul(seq, w_z), b_z)
    in_r = add_bias(matmul(seq, w_r), b_r)
    in_h = add_bias(matmul(seq, w_h), b_h)
    hidden = p.hidden_dim
    one = Tensor(np.ones((1, hidden)))
    h = Tensor(np.zeros((1, hidden)))
    states = []
    for t in range(seq.rows):
        z = sigmoid(add(slice_rows(in_z, t, t + 1), matmul(h, u_z)))
        r = sigmoid(add(slice_rows(in_r, t, t + 1), matmul(h, u_r)))
        cand = tanh(add(slice_rows(in_h, t, t + 1),
                        matmul(hadamard(r, h), u_h)))
        h = add(hadamard(sub(one, z), h), hadamard(z, cand))
        states.append(h)
    out = concat_rows(*states)
    return reverse_rows(out) if reverse else out


def clip_grad_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the factor that was applied (1.0 when no clipping happened).
    """
    params = list(params)
    total_sq = 0.0
    for p in params:
        total_sq += float((p.grad * p.grad).sum())
    total = np.sqrt(total_sq)
    if total <= max_norm or total == 0.0:
        return 1.0
    factor = max_norm / total
    for p in params:
        p.grad *= factor
    return factor


def adam_step(params: Iterable[Parameter], lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update; gradients are zeroed afterwards."""
    for p in params:
        p.step_count += 1
        g = p.grad
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** p.step_count)
        v_hat = p.adam_v / (1.0 - beta2 ** p.step_count)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()

"""Shared test utilities: the finite-difference oracle and tiny model builders."""

from __future__ import annotations

import numpy as np

from voicesep.config import RunConfig
from voicesep.model import ModelParams, init_model_params


def finite_difference(f, arrays, h=1e-5):
    """Central-difference gradient of the scalar ``f()`` w.r.t. each array.

    ``f`` takes no arguments and must recompute from the arrays, which are
    perturbed in place one entry at a time.
    """
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat = arr.ravel()
        grad_flat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f()
            flat[i] = orig - h
            f_minus = f()
            flat[i] = orig
            grad_flat[i] = (f_plus - f_minus) / (2.0 * h)
        grads.append(grad)
    return grads


def max_rel_error(a, b, floor=1e-3):
    """Largest entrywise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def tiny_run_config(**overrides) -> RunConfig:
    """A config small enough for second-scale training tests."""
    base = dict(win_len=64, fft_len=128, hop=32, low_bands=24, seq_len=12,
                context=2, variant="ris-s", ri_max_iter=3, ri_tau_term=1e-2,
                batch_size=4, epochs=1, learning_rate=1e-3, seed=7,
                eval_filter_len=32)
    base.update(overrides)
    return RunConfig(**base)


def tiny_model(low_bands=6, full_bands=10, seed=0) -> ModelParams:
    return init_model_params(low_bands, full_bands, np.random.default_rng(seed))

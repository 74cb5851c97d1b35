"""Masker/Denoiser behavior: encoding, recurrent inference, masking, shapes."""

import numpy as np
import pytest
from helpers import finite_difference, max_rel_error, tiny_model

from voicesep.autodiff import Tape, Tensor, hadamard, sum_all
from voicesep.model import (
    InferenceConfig,
    denoise,
    encode,
    forward,
    init_model_params,
    predict_mask,
    recurrent_inference,
    skip_filter,
)
from voicesep.nn import gru_sequence


def zero_weights(params):
    for p in params.parameters():
        p.values[:] = 0.0
    return params


def test_encode_zero_weights_passes_residual_through():
    params = zero_weights(tiny_model(low_bands=3, full_bands=6))
    rng = np.random.default_rng(0)
    y = np.abs(rng.standard_normal((8, 3)))
    out = encode(Tensor(y), params.masker, context=2).values
    assert out.shape == (4, 6)
    for row, t in enumerate(range(2, 6)):
        assert np.allclose(out[row, :3], y[t], atol=1e-14)
        assert np.allclose(out[row, 3:], y[8 - 1 - t], atol=1e-14)


def test_encode_shape_contract():
    params = tiny_model(low_bands=4, full_bands=9)
    y = np.abs(np.random.default_rng(1).standard_normal((10, 4)))
    assert encode(Tensor(y), params.masker, context=3).values.shape == (4, 8)
    assert encode(Tensor(y), params.masker, context=0).values.shape == (10, 8)


def _h_enc(params, rng, t_prime=6):
    f = params.masker.low_bands
    return Tensor(rng.standard_normal((t_prime, 2 * f)) * 0.5)


def test_recurrent_inference_huge_threshold_stops_after_one_iteration():
    params = tiny_model()
    h = _h_enc(params, np.random.default_rng(2))
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=10, tau_term=1e9)
    _, used = recurrent_inference(h, params.masker, cfg)
    assert used == 1


def test_recurrent_inference_zero_threshold_runs_all_iterations():
    params = tiny_model()
    h = _h_enc(params, np.random.default_rng(3))
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=4, tau_term=0.0)
    _, used = recurrent_inference(h, params.masker, cfg)
    assert used == 4


def test_recurrent_inference_zero_decoder_terminates_immediately():
    params = zero_weights(tiny_model())
    h = _h_enc(params, np.random.default_rng(4))
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=7, tau_term=1e-6)
    out, used = recurrent_inference(h, params.masker, cfg)
    assert used == 1
    assert np.array_equal(out.values, np.zeros_like(out.values))


def test_nri_output_is_s0_of_the_iterative_run():
    params = tiny_model(seed=5)
    h = _h_enc(params, np.random.default_rng(5))
    nri_cfg = InferenceConfig(use_recurrent_inference=False, max_iter=1, tau_term=0.0)
    nri_out, used = recurrent_inference(h, params.masker, nri_cfg)
    assert used == 0
    s0 = gru_sequence(h, params.masker.dec)
    assert np.array_equal(nri_out.values, s0.values)


def test_iteration_count_non_increasing_in_threshold():
    params = tiny_model(seed=6)
    h = _h_enc(params, np.random.default_rng(6))
    counts = []
    for tau in (0.0, 1e-8, 1e-4, 1e-2, 1.0, 1e6):
        cfg = InferenceConfig(use_recurrent_inference=True, max_iter=8, tau_term=tau)
        counts.append(recurrent_inference(h, params.masker, cfg)[1])
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_predict_mask_affine_cases():
    params = tiny_model()
    h = _h_enc(params, np.random.default_rng(7))
    params.masker.w_mask.values[:] = 0.0
    params.masker.b_mask.values[:] = 0.0
    assert np.all(predict_mask(h, params.masker).values == 0.0)
    params.masker.b_mask.values[:] = 0.75
    assert np.allclose(predict_mask(h, params.masker).values, 0.75)


def test_predict_mask_nonnegative():
    params = tiny_model(seed=8)
    h = _h_enc(params, np.random.default_rng(8))
    assert predict_mask(h, params.masker).values.min() >= 0.0


def test_skip_filter_cases():
    y = Tensor([[2.0, 1.0], [0.5, 3.0]])
    assert np.array_equal(skip_filter(y, Tensor(np.ones((2, 2)))).values, y.values)
    assert np.all(skip_filter(y, Tensor(np.zeros((2, 2)))).values == 0.0)
    assert skip_filter(Tensor([[2.0]]), Tensor([[0.8]])).values[0, 0] == pytest.approx(1.6)
    with pytest.raises(ValueError):
        skip_filter(y, Tensor(np.ones((3, 2))))


def test_denoise_zero_input_is_zero():
    params = tiny_model(seed=9)
    out = denoise(Tensor(np.zeros((4, 10))), params.denoiser)
    assert np.all(out.values == 0.0)


def test_denoise_constant_gain():
    params = zero_weights(tiny_model(seed=10))
    y = np.abs(np.random.default_rng(10).standard_normal((4, 10)))
    params.denoiser.b_dec.values[:] = 1.0
    assert np.allclose(denoise(Tensor(y), params.denoiser).values, y)
    params.denoiser.b_dec.values[:] = 2.5
    assert np.allclose(denoise(Tensor(y), params.denoiser).values, 2.5 * y)


def test_forward_shape_contract_paper_dimensions():
    rng = np.random.default_rng(11)
    params = init_model_params(744, 2049, rng)
    y_tr = np.abs(rng.standard_normal((60, 744)))
    y_in = np.abs(rng.standard_normal((60, 2049)))
    cfg = InferenceConfig(use_recurrent_inference=False, max_iter=1, tau_term=0.0)
    trace = forward(y_tr, y_in, params, cfg, context=10)
    assert trace.mask.values.shape == (40, 2049)
    assert trace.filtered.values.shape == (40, 2049)
    assert trace.denoised.values.shape == (40, 2049)


def test_forward_zero_input_gives_zero_outputs():
    params = tiny_model(seed=12)
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=3, tau_term=1e-2)
    trace = forward(np.zeros((8, 6)), np.zeros((8, 10)), params, cfg, context=2)
    assert np.all(trace.filtered.values == 0.0)
    assert np.all(trace.denoised.values == 0.0)


def test_forward_outputs_nonnegative_and_bounded_iterations():
    rng = np.random.default_rng(13)
    params = tiny_model(seed=13)
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=5, tau_term=1e-4)
    for _ in range(3):
        y_tr = np.abs(rng.standard_normal((8, 6)))
        y_in = np.abs(rng.standard_normal((8, 10)))
        trace = forward(y_tr, y_in, params, cfg, context=2)
        assert trace.mask.values.min() >= 0.0
        assert trace.filtered.values.min() >= 0.0
        assert trace.denoised.values.min() >= 0.0
        assert trace.ri_iterations_used <= cfg.max_iter


def test_forward_masking_bound_zero_bins_stay_zero():
    rng = np.random.default_rng(14)
    params = tiny_model(seed=14)
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=2, tau_term=0.0)
    y_tr = np.abs(rng.standard_normal((8, 6)))
    y_in = np.abs(rng.standard_normal((8, 10)))
    y_in[:, 3] = 0.0
    trace = forward(y_tr, y_in, params, cfg, context=2)
    assert np.all(trace.filtered.values[:, 3] == 0.0)
    assert np.all(trace.denoised.values[:, 3] == 0.0)


def test_forward_gradients_through_recurrent_inference():
    # tau_term=0 pins the realized depth at max_iter, so the perturbed
    # finite-difference runs unroll the same number of decoder applications
    rng = np.random.default_rng(15)
    params = tiny_model(low_bands=3, full_bands=5, seed=15)
    cfg = InferenceConfig(use_recurrent_inference=True, max_iter=2, tau_term=0.0)
    y_tr = np.abs(rng.standard_normal((6, 3)))
    y_in = np.abs(rng.standard_normal((6, 5)))
    const_w = rng.standard_normal((2, 5))

    def scalar():
        tape = Tape()
        trace = forward(y_tr, y_in, params, cfg, context=2, tape=tape)
        return tape, sum_all(hadamard(trace.denoised, Tensor(const_w)))

    tape, root = scalar()
    trace_used = forward(y_tr, y_in, params, cfg, context=2).ri_iterations_used
    assert trace_used == 2
    tape.backward(root)
    names = [p.name for p in params.parameters()]
    fd = finite_difference(lambda: scalar()[1].item(),
                           [p.values for p in params.parameters()])
    for name, param, expected in zip(names, params.parameters(), fd):
        assert max_rel_error(param.grad, expected) < 1e-4, name

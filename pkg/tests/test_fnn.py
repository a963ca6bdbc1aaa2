"""Test the Doppler regressor network: shapes, backprop, Adam and persistence."""

import numpy as np
import pytest

from components.errors import DimensionError, ModelFormatError
from components.fnn import (
    HEADER_DTYPE, adam_init, adam_step, branch_input, copy_model, create_model, fnn_forward, layer_widths,
    load_model, loss_and_gradients, mse, save_model,
)
from config import config


def test_layer_widths():
    """Test the default {M, M, M/2, M/2} hidden stack and an override."""
    assert layer_widths(128) == [256, 128, 128, 64, 64, 1], f'default widths wrong: {layer_widths(128)}'
    assert layer_widths(8, [32, 32]) == [16, 32, 32, 1], 'hidden override ignored'
    model = create_model(16, np.random.default_rng(0))
    shapes = [W.shape for W in model['weights']]
    assert shapes == [(32, 16), (16, 16), (16, 8), (8, 8), (8, 1)], f'weight shapes wrong: {shapes}'
    assert all(np.all(b == 0) for b in model['biases']), 'biases start at zero'
    print('✓ Layer widths work')


def test_zero_weights_predict_zero():
    """Test that an all-zero network predicts 0 Hz."""
    model = create_model(8, np.random.default_rng(1))
    for W, b in zip(model['weights'], model['biases']):
        W[:] = 0.0
        b[:] = 0.0
    assert fnn_forward(model, np.ones(16)) == 0.0, 'zero network must output 0'
    print('✓ Zero network works')


def test_forward_is_deterministic():
    """Test seeded creation and agreement of single and batched predictions."""
    first = create_model(8, np.random.default_rng(2))
    second = create_model(8, np.random.default_rng(2))
    assert all(np.array_equal(a, b) for a, b in zip(first['weights'], second['weights'])), 'seeded weights differ'

    inputs = np.random.default_rng(3).standard_normal((4, 16))
    batch = fnn_forward(first, inputs)
    assert batch.shape == (4,), 'batch prediction must have one value per row'
    for row, value in zip(inputs, batch):
        assert np.isclose(fnn_forward(first, row), value), 'single and batched predictions differ'
    print('✓ Forward pass is deterministic')


def test_output_scaled_to_hertz():
    """Test that the head output is scaled by ν_train_max."""
    model = create_model(8, np.random.default_rng(4), nu_train_max=2e3)
    model['weights'][-1][:] = 0.0
    model['biases'][-1][:] = 0.25
    assert np.isclose(fnn_forward(model, np.zeros(16)), 500.0), 'head 0.25 must mean 500 Hz'
    print('✓ Output scaling works')


def test_gradients_match_finite_differences():
    """Test backprop against central differences on a small network."""
    rng = np.random.default_rng(5)
    model = create_model(4, rng, hidden=[8, 8, 4, 4])
    for b in model['biases']:
        b[:] = rng.normal(0.1, 0.05, b.shape)
    inputs = rng.standard_normal((5, 8))
    targets = rng.uniform(-1, 1, 5)

    _, (grads_w, grads_b) = loss_and_gradients(model, inputs, targets)
    analytic, numeric = [], []
    step = 1e-6
    for params, grads in [(model['weights'], grads_w), (model['biases'], grads_b)]:
        for param, grad in zip(params, grads):
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + step
                upper = loss_and_gradients(model, inputs, targets)[0]
                param[index] = original - step
                lower = loss_and_gradients(model, inputs, targets)[0]
                param[index] = original
                numeric.append((upper - lower) / (2 * step))
                analytic.append(grad[index])

    analytic, numeric = np.array(analytic), np.array(numeric)
    error = np.linalg.norm(analytic - numeric) / (np.linalg.norm(analytic) + np.linalg.norm(numeric))
    assert error < 1e-4, f'gradient relative error {error}'
    print('✓ Backpropagation works')


def test_overfits_small_batch():
    """Test that Adam drives the loss on eight samples close to zero."""
    rng = np.random.default_rng(6)
    model = create_model(8, rng, hidden=[32, 32])
    inputs = rng.standard_normal((8, 16))
    targets = rng.uniform(-1, 1, 8)
    state = adam_init(model)
    initial = mse(model, inputs, targets)
    for _ in range(2000):
        _, grads = loss_and_gradients(model, inputs, targets)
        adam_step(model, grads, state, 1e-3)
    final = mse(model, inputs, targets)
    assert final < 1e-3 and final < initial, f'loss only fell from {initial} to {final}'
    print('✓ Small batch overfitting works')


def test_adam_first_step():
    """Test that the first bias-corrected step moves every parameter by the learning rate."""
    model = create_model(4, np.random.default_rng(7))
    before = copy_model(model)
    grads = ([np.full_like(W, 0.5) for W in model['weights']], [np.full_like(b, -0.5) for b in model['biases']])
    state = adam_init(model)
    adam_step(model, grads, state, 0.01)
    assert state['step'] == 1, 'step counter must advance'
    for W, W0 in zip(model['weights'], before['weights']):
        assert np.allclose(W, W0 - 0.01, atol=1e-9), 'positive gradient must lower weights by lr'
    for b, b0 in zip(model['biases'], before['biases']):
        assert np.allclose(b, b0 + 0.01, atol=1e-9), 'negative gradient must raise biases by lr'
    print('✓ Adam step works')


def test_branch_input():
    """Test normalization by α√P_T and real stacking."""
    y = np.array([2.0 + 2.0j, -4.0j])
    stacked = branch_input(y, 2.0j, 4.0)
    assert np.allclose(stacked, [0.5, -1.0, -0.5, 0.0]), f'normalized input wrong: {stacked}'
    print('✓ Branch input works')


def test_save_load_exact(tmp_path):
    """Test that a saved model loads bit-for-bit."""
    model = create_model(8, np.random.default_rng(8), nu_train_max=4.5e3)
    path = tmp_path / 'model.bin'
    save_model(path, model)
    loaded = load_model(path)
    assert loaded['M'] == 8 and loaded['nu_train_max'] == 4.5e3, 'header fields lost'
    for key in ['weights', 'biases']:
        assert all(np.array_equal(a, b) for a, b in zip(model[key], loaded[key])), f'{key} changed on reload'
    expected = HEADER_DTYPE.itemsize + 4 * 6 + 8 * sum(W.size + b.size for W, b in zip(model['weights'], model['biases']))
    assert path.stat().st_size == expected, 'file size must match the layout'
    print('✓ Model persistence works')


def test_load_rejects_bad_files(tmp_path):
    """Test bad magic, unknown version, truncation and a short file."""
    path = tmp_path / 'model.bin'
    save_model(path, create_model(4, np.random.default_rng(9)))
    data = path.read_bytes()

    corruptions = {
        'magic': b'NOTAMODL' + data[8:],
        'version': data[:8] + (2).to_bytes(4, 'little') + data[12:],
        'truncated': data[:-8],
        'short': data[:10],
    }
    for name, content in corruptions.items():
        bad = tmp_path / f'{name}.bin'
        bad.write_bytes(content)
        with pytest.raises(ModelFormatError):
            load_model(bad)
    print('✓ Corrupt model files are rejected')


def test_input_width_mismatch():
    """Test the dimension error for an input of the wrong width."""
    model = create_model(8, np.random.default_rng(10))
    with pytest.raises(DimensionError):
        fnn_forward(model, np.zeros(10))
    print('✓ Input width check works')


if __name__ == '__main__':
    import pathlib
    import tempfile

    config.debug_mode = False

    test_layer_widths()
    test_zero_weights_predict_zero()
    test_forward_is_deterministic()
    test_output_scaled_to_hertz()
    test_gradients_match_finite_differences()
    test_overfits_small_batch()
    test_adam_first_step()
    test_branch_input()
    with tempfile.TemporaryDirectory() as tmp:
        test_save_load_exact(pathlib.Path(tmp))
        test_load_rejects_bad_files(pathlib.Path(tmp))
    test_input_width_mismatch()

    print('\n🎉 All regressor tests passed!')

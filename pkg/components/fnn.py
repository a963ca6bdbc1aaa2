"""Dense ReLU network for Doppler regression: forward, backprop, Adam, persistence.

Weights are stored as (fan_in, fan_out) matrices so a batch of row vectors
propagates as ``x @ W + b``. Hidden layers use ReLU, the scalar head is
linear and predicts ν/ν_train_max.
"""

from pathlib import Path
from typing import TypedDict

import numpy as np

from components.errors import DimensionError, ModelFormatError
from components.utils import stack_complex

MODEL_MAGIC = b'DOAFNN01'
MODEL_VERSION = 1
HEADER_DTYPE = np.dtype([
    ('magic', 'S8'),
    ('version', '<u4'),
    ('M', '<u4'),
    ('num_layers', '<u4'),
    ('reserved', '<u4'),
    ('nu_train_max', '<f8'),
])


class FnnModel(TypedDict):
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    M: int
    nu_train_max: float


class AdamState(TypedDict):
    step: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]


def layer_widths(M: int, hidden: list[int] | None = None) -> list[int]:
    """Widths from the 2M-real input through the hidden layers to the scalar head."""
    if hidden is None:
        hidden = [M, M, M // 2, M // 2]
    return [2 * M, *hidden, 1]


def create_model(M: int, rng: np.random.Generator, nu_train_max: float = 5e3,
                 hidden: list[int] | None = None) -> FnnModel:
    """Initialize a regressor with He-uniform weights and zero biases.

    Args:
        M: Subcarrier count (input is 2M reals).
        rng: Random generator for the weights.
        nu_train_max: Doppler (Hz) that maps to a head output of 1.
        hidden: Hidden widths, default {M, M, M/2, M/2}.

    Returns:
        Untrained model.
    """
    widths = layer_widths(M, hidden)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return {'weights': weights, 'biases': biases, 'M': M, 'nu_train_max': float(nu_train_max)}


def copy_model(model: FnnModel) -> FnnModel:
    return {
        'weights': [w.copy() for w in model['weights']],
        'biases': [b.copy() for b in model['biases']],
        'M': model['M'],
        'nu_train_max': model['nu_train_max'],
    }


def forward_pass(model: FnnModel, inputs: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Propagate a batch and keep every layer's output for backprop.

    Args:
        model: Regressor.
        inputs: Batch of shape (B, 2M).

    Returns:
        Tuple of (activations, head) where activations[0] is the input,
        activations[i] the output of layer i, and head has shape (B, 1).
    """
    if inputs.shape[-1] != model['weights'][0].shape[0]:
        raise DimensionError(
            f"input width {inputs.shape[-1]} does not match model width {model['weights'][0].shape[0]}")
    activations = [inputs]
    last = len(model['weights']) - 1
    for layer, (W, b) in enumerate(zip(model['weights'], model['biases'])):
        z = activations[-1] @ W + b
        activations.append(z if layer == last else np.maximum(z, 0.0))
    return activations, activations[-1]


def fnn_forward(model: FnnModel, inputs: np.ndarray) -> float | np.ndarray:
    """Predict Doppler in Hz for one stacked input (2M,) or a batch (B, 2M)."""
    inputs = np.asarray(inputs, dtype=float)
    _, head = forward_pass(model, np.atleast_2d(inputs))
    prediction = head[:, 0] * model['nu_train_max']
    return float(prediction[0]) if inputs.ndim == 1 else prediction


def predict_normalized(model: FnnModel, inputs: np.ndarray) -> np.ndarray:
    """Head outputs (ν/ν_train_max) for a batch."""
    return forward_pass(model, inputs)[1][:, 0]


def fnn_backward(model: FnnModel, activations: list[np.ndarray],
                 d_head: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backpropagate dL/dhead through the network.

    Returns:
        Tuple of (weight gradients, bias gradients) in layer order.
    """
    num_layers = len(model['weights'])
    grads_w: list[np.ndarray] = [np.empty(0)] * num_layers
    grads_b: list[np.ndarray] = [np.empty(0)] * num_layers
    delta = d_head
    for layer in reversed(range(num_layers)):
        grads_w[layer] = activations[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer:
            # ReLU passes gradient where its output was positive
            delta = (delta @ model['weights'][layer].T) * (activations[layer] > 0)
    return grads_w, grads_b


def loss_and_gradients(model: FnnModel, inputs: np.ndarray,
                       targets: np.ndarray) -> tuple[float, tuple[list[np.ndarray], list[np.ndarray]]]:
    """Mean squared error on normalized targets and its parameter gradients."""
    activations, head = forward_pass(model, inputs)
    error = head[:, 0] - targets
    loss = float(np.mean(error ** 2))
    d_head = (2.0 / len(targets)) * error[:, None]
    return loss, fnn_backward(model, activations, d_head)


def mse(model: FnnModel, inputs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((predict_normalized(model, inputs) - targets) ** 2))


def adam_init(model: FnnModel) -> AdamState:
    params = model['weights'] + model['biases']
    return {
        'step': 0,
        'first_moment': [np.zeros_like(p) for p in params],
        'second_moment': [np.zeros_like(p) for p in params],
    }


def adam_step(model: FnnModel, grads: tuple[list[np.ndarray], list[np.ndarray]], state: AdamState,
              learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Apply one bias-corrected Adam update to the model in place."""
    state['step'] += 1
    step = state['step']
    params = model['weights'] + model['biases']
    for param, grad, m, v in zip(params, grads[0] + grads[1], state['first_moment'], state['second_moment']):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        param -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)


def branch_input(y_p1: np.ndarray, alpha_hat: complex, P_T: float) -> np.ndarray:
    """Normalize a pilot branch by α̂√P_T and stack it to 2M reals."""
    return stack_complex(np.asarray(y_p1) / (alpha_hat * np.sqrt(P_T)))


def save_model(path: str | Path, model: FnnModel) -> None:
    """Write a model in the versioned little-endian binary layout.

    Layout: a 32-byte header (magic, version, M, layer count, reserved,
    ν_train_max), the layer widths as uint32, then for every layer the
    row-major float64 weight matrix followed by its bias vector.
    """
    widths = [model['weights'][0].shape[0]] + [W.shape[1] for W in model['weights']]
    header = np.array([(MODEL_MAGIC, MODEL_VERSION, model['M'], len(model['weights']), 0,
                        model['nu_train_max'])], dtype=HEADER_DTYPE)
    with open(path, 'wb') as f:
        f.write(header.tobytes())
        f.write(np.asarray(widths, dtype='<u4').tobytes())
        for W, b in zip(model['weights'], model['biases']):
            f.write(np.ascontiguousarray(W, dtype='<f8').tobytes())
            f.write(np.ascontiguousarray(b, dtype='<f8').tobytes())


def load_model(path: str | Path) -> FnnModel:
    """Read a model written by save_model.

    Raises:
        ModelFormatError: On a bad magic, unknown version or wrong size.
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER_DTYPE.itemsize:
        raise ModelFormatError(f'{path}: file too short for a model header')
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if header['magic'] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {header['magic']!r}")
    if header['version'] != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {header['version']}")

    num_layers = int(header['num_layers'])
    offset = HEADER_DTYPE.itemsize
    if num_layers < 1 or len(data) < offset + 4 * (num_layers + 1):
        raise ModelFormatError(f'{path}: truncated layer table')
    widths = np.frombuffer(data, dtype='<u4', count=num_layers + 1, offset=offset).astype(int)
    offset += 4 * (num_layers + 1)

    M = int(header['M'])
    if widths[0] != 2 * M or widths[-1] != 1:
        raise ModelFormatError(f'{path}: widths {widths.tolist()} do not fit M={M}')
    expected = offset + 8 * sum(int(a) * int(b) + int(b) for a, b in zip(widths[:-1], widths[1:]))
    if len(data) != expected:
        raise ModelFormatError(f'{path}: expected {expected} bytes, found {len(data)}')

    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        W = np.frombuffer(data, dtype='<f8', count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype='<f8', count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(W.reshape(fan_in, fan_out).astype(float))
        biases.append(b.astype(float))
    return {'weights': weights, 'biases': biases, 'M': M, 'nu_train_max': float(header['nu_train_max'])}

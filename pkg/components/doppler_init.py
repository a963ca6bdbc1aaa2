"""Initial Doppler providers and the regressor's synthetic training pipeline.

Three ways to seed the decision-directed tracker: assume zero Doppler,
minimize the pilot EVM over a Doppler grid, or regress the Doppler from the
normalized pilot branch with a trained dense network.
"""

from typing import TypedDict

import numpy as np
from tqdm import tqdm

from components.errors import ParameterError, TrainingError
from components.fnn import (
    FnnModel, adam_init, adam_step, branch_input, copy_model, create_model, fnn_forward,
    loss_and_gradients, mse, predict_normalized,
)
from components.receiver import delay_compensate, ici_compensate
from components.signal_core import OfdmConfig, delay_phasor, doppler_phasor, ifft_unitary
from components.utils import db_to_linear, stack_complex
from config import DEFAULT_TRAINING, config

INIT_METHODS = ('zd', 'evm', 'dl')
GENERATION_CHUNK = 8192


class TrainingConfig(TypedDict):
    samples: int
    validation_fraction: float
    tau_max_us: float
    nu_max_hz: float
    snr_min_db: float
    snr_max_db: float
    batch_size: int
    learning_rate: float
    epochs: int
    seed: int


def default_training_config() -> TrainingConfig:
    """Desk-scale recipe; 5·10⁵ samples give a sharper regressor at ten times the cost."""
    return TrainingConfig(**DEFAULT_TRAINING)


def validate_training_config(tc: TrainingConfig) -> None:
    """Raise ParameterError for an unusable training recipe."""
    if tc['samples'] < 2:
        raise ParameterError(f"need at least 2 samples, got {tc['samples']}")
    if not 0.0 < tc['validation_fraction'] < 1.0:
        raise ParameterError(f"validation fraction must lie in (0, 1), got {tc['validation_fraction']}")
    if tc['tau_max_us'] < 0 or not tc['nu_max_hz'] > 0:
        raise ParameterError('delay range must be non-negative and Doppler range positive')
    if tc['snr_min_db'] > tc['snr_max_db']:
        raise ParameterError(f"SNR range [{tc['snr_min_db']}, {tc['snr_max_db']}] is empty")
    if tc['batch_size'] < 1 or tc['epochs'] < 1 or not tc['learning_rate'] > 0:
        raise ParameterError('batch size, epochs and learning rate must be positive')


def init_zero() -> float:
    """Zero-Doppler initialization."""
    return 0.0


def evm_grid(max_hz: float = 5e3, step_hz: float = 50.0) -> np.ndarray:
    """Symmetric Doppler search grid -max..max with the given step."""
    if not step_hz > 0 or max_hz < 0:
        raise ParameterError(f'invalid EVM grid: max={max_hz}, step={step_hz}')
    half = int(round(max_hz / step_hz))
    return np.arange(-half, half + 1) * step_hz


def evm_objective(nu: float | np.ndarray, y_p1: np.ndarray, tau_hat: float, alpha_hat: complex,
                  x_1: np.ndarray, ofdm: OfdmConfig) -> float | np.ndarray:
    """Pilot EVM after compensating a Doppler hypothesis.

    EVM(ν) = ‖F_M[y⊙c*(ν)]⊙b*(τ̂)/(α̂√P_T) - x_1‖²/M. A vector of
    hypotheses is evaluated in one pass.

    Args:
        nu: Doppler hypothesis (Hz) or vector of hypotheses.
        y_p1: Beamformed pilot branch, shape (M,).
        tau_hat: Delay estimate.
        alpha_hat: Pilot gain estimate (non-zero).
        x_1: Pilot symbols.
        ofdm: Link configuration.

    Returns:
        EVM per hypothesis.
    """
    if alpha_hat == 0:
        raise ParameterError('EVM is undefined for a zero gain')
    equalized = delay_compensate(ici_compensate(y_p1, nu, ofdm.delta_tau), tau_hat, ofdm.delta_f)
    equalized = equalized / (alpha_hat * np.sqrt(ofdm.P_T))
    x_1 = np.asarray(x_1)
    error = equalized - (x_1[:, None] if equalized.ndim == 2 else x_1)
    evm = np.sum(np.abs(error) ** 2, axis=0) / ofdm.M
    return float(evm) if np.ndim(evm) == 0 else evm


def init_evm(y_p1: np.ndarray, tau_hat: float, alpha_hat: complex, x_1: np.ndarray, ofdm: OfdmConfig,
             grid: np.ndarray) -> float:
    """Grid Doppler that minimizes the pilot EVM; ties go to the smallest |ν|."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError('EVM grid is empty')
    by_magnitude = np.argsort(np.abs(grid), kind='stable')
    values = evm_objective(grid[by_magnitude], y_p1, tau_hat, alpha_hat, x_1, ofdm)
    return float(grid[by_magnitude][int(np.argmin(values))])


def init_dl(model: FnnModel, y_p1: np.ndarray, alpha_hat: complex, ofdm: OfdmConfig) -> float:
    """Regress the Doppler (Hz) from the normalized pilot branch."""
    if alpha_hat == 0:
        raise ParameterError('network input is undefined for a zero gain')
    return fnn_forward(model, branch_input(y_p1, alpha_hat, ofdm.P_T))


def init_doppler(method: str, y_p1: np.ndarray, tau_hat: float, alpha_hat: complex, x_1: np.ndarray,
                 ofdm: OfdmConfig, model: FnnModel | None = None, grid: np.ndarray | None = None) -> float:
    """Dispatch to the zero, EVM or network initializer."""
    if method == 'zd':
        nu = init_zero()
    elif method == 'evm':
        nu = init_evm(y_p1, tau_hat, alpha_hat, x_1, ofdm, evm_grid() if grid is None else grid)
    elif method == 'dl':
        if model is None:
            raise ParameterError('dl initialization needs a trained model')
        nu = init_dl(model, y_p1, alpha_hat, ofdm)
    else:
        raise ParameterError(f'unknown Doppler initialization {method!r}, expected one of {INIT_METHODS}')

    if config.debug_mode:
        print(f'[DOPPLER] {method} initialization: {nu:.1f} Hz')
    return nu


def synthetic_branches(taus: np.ndarray, nus: np.ndarray, snrs: np.ndarray, x_1: np.ndarray, ofdm: OfdmConfig,
                       rng: np.random.Generator) -> np.ndarray:
    """Noisy unit-gain pilot branches F_Mᴴ(x_1⊙b(τ))⊙c(ν) + w, w ~ CN(0, I/SNR).

    Returns:
        Complex array of shape (len(taus), M).
    """
    clean = ifft_unitary(x_1[:, None] * delay_phasor(taus, ofdm.M, ofdm.delta_f), axis=0)
    clean = (clean * doppler_phasor(nus, ofdm.M, ofdm.delta_tau)).T
    shape = clean.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return clean + noise * np.sqrt(0.5 / snrs)[:, None]


def generate_training_sample(tau: float, nu: float, snr: float, x_1: np.ndarray, rng: np.random.Generator,
                             ofdm: OfdmConfig, nu_train_max: float = 5e3) -> tuple[np.ndarray, float]:
    """One (input, target) pair: stacked noisy branch and ν/ν_train_max.

    Args:
        tau: Delay (s).
        nu: Doppler (Hz).
        snr: Linear SNR (> 0).
        x_1: Pilot symbols.
        rng: Random generator for the noise.
        ofdm: Link configuration.
        nu_train_max: Doppler normalization (Hz).

    Returns:
        Tuple of (2M real input, normalized target).
    """
    if not snr > 0:
        raise ParameterError(f'SNR must be positive, got {snr}')
    branch = synthetic_branches(np.array([tau]), np.array([nu]), np.array([snr]), np.asarray(x_1), ofdm, rng)
    return stack_complex(branch[0]), nu / nu_train_max


def generate_training_set(tc: TrainingConfig, x_1: np.ndarray, ofdm: OfdmConfig,
                          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw τ ~ U[0, τ_max], ν ~ U[-ν_max, ν_max], SNR ~ U[dB range] and synthesize samples.

    Returns:
        Tuple of (inputs (S, 2M), normalized targets (S,)).
    """
    count = tc['samples']
    taus = rng.uniform(0.0, tc['tau_max_us'] * 1e-6, count)
    nus = rng.uniform(-tc['nu_max_hz'], tc['nu_max_hz'], count)
    snrs = db_to_linear(rng.uniform(tc['snr_min_db'], tc['snr_max_db'], count))
    inputs = np.empty((count, 2 * ofdm.M))
    x_1 = np.asarray(x_1)
    for start in range(0, count, GENERATION_CHUNK):
        chunk = slice(start, min(start + GENERATION_CHUNK, count))
        inputs[chunk] = stack_complex(synthetic_branches(taus[chunk], nus[chunk], snrs[chunk], x_1, ofdm, rng))
    return inputs, nus / tc['nu_max_hz']


def split_dataset(inputs: np.ndarray, targets: np.ndarray,
                  validation_fraction: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split into leading training and trailing validation parts."""
    boundary = int(round(len(targets) * (1.0 - validation_fraction)))
    boundary = min(max(boundary, 1), len(targets) - 1)
    return inputs[:boundary], targets[:boundary], inputs[boundary:], targets[boundary:]


def fnn_train(tc: TrainingConfig, x_1: np.ndarray, ofdm: OfdmConfig,
              hidden: list[int] | None = None) -> tuple[FnnModel, dict[str, list[float]]]:
    """Train the Doppler regressor with Adam on MSE and keep the best validation model.

    Args:
        tc: Training recipe.
        x_1: Pilot the receiver will use.
        ofdm: Link configuration.
        hidden: Hidden widths override.

    Returns:
        Tuple of (best model, history with 'train_mse' and 'val_mse'); the
        first validation entry is the untrained model.
    """
    validate_training_config(tc)
    rng = np.random.default_rng(tc['seed'])
    inputs, targets = generate_training_set(tc, x_1, ofdm, rng)
    train_x, train_y, val_x, val_y = split_dataset(inputs, targets, tc['validation_fraction'])

    model = create_model(ofdm.M, rng, tc['nu_max_hz'], hidden)
    state = adam_init(model)
    history: dict[str, list[float]] = {'train_mse': [], 'val_mse': [mse(model, val_x, val_y)]}
    best, best_val = copy_model(model), history['val_mse'][0]

    epochs = tqdm(range(1, tc['epochs'] + 1), desc='train-fnn', disable=not config.debug_mode)
    for epoch in epochs:
        order = rng.permutation(len(train_y))
        losses = []
        for start in range(0, len(order), tc['batch_size']):
            batch = order[start:start + tc['batch_size']]
            loss, grads = loss_and_gradients(model, train_x[batch], train_y[batch])
            adam_step(model, grads, state, tc['learning_rate'])
            losses.append(loss * len(batch))
        history['train_mse'].append(float(np.sum(losses) / len(order)))

        val = mse(model, val_x, val_y)
        history['val_mse'].append(val)
        if not np.isfinite(val):
            raise TrainingError('validation loss is not finite', epoch, history['val_mse'])
        if val < best_val:
            best, best_val = copy_model(model), val
        if config.debug_mode:
            print(f"[FNN] epoch {epoch}: train {history['train_mse'][-1]:.3e}, val {val:.3e}")

    return best, history


def best_so_far(history: list[float]) -> list[float]:
    """Running minimum of a validation history."""
    return np.minimum.accumulate(np.asarray(history, dtype=float)).tolist()


def regression_metrics(predicted: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """Pearson correlation and RMSE of normalized Doppler predictions."""
    predicted, truth = np.asarray(predicted, dtype=float), np.asarray(truth, dtype=float)
    return {
        'pearson': float(np.corrcoef(predicted, truth)[0, 1]),
        'nrmse': float(np.sqrt(np.mean((predicted - truth) ** 2))),
    }


def evaluate_model(model: FnnModel, inputs: np.ndarray, targets: np.ndarray) -> dict[str, float]:
    return regression_metrics(predict_normalized(model, inputs), targets)

"""Pilot-based path estimation: CFAR DoA detection, delay and LS gain.

The angular spectrum of the pilot observation is scanned on a uniform grid,
peaks are kept by a cell-averaging CFAR detector, and each detected path is
isolated by angle-domain beamforming before its delay and complex gain are
estimated from the block pilot.
"""

from functools import lru_cache
from typing import TypedDict

import numpy as np
from scipy.special import betaincinv

from components.errors import DetectionError, DimensionError, ParameterError
from components.signal_core import OfdmConfig, delay_phasor, ifft_unitary, steering_matrix, steering_vector
from config import DEFAULT_CFAR, config


class CfarConfig(TypedDict):
    grid_step_deg: float
    training_cells: int
    guard_cells: int
    pfa: float
    min_rel_power_db: float


class SearchGrids(TypedDict):
    theta: np.ndarray  # radians
    tau: np.ndarray  # seconds


class PathEstimate(TypedDict):
    """Estimated parameters of one detected path."""
    theta_hat: float
    tau_hat: float
    alpha_hat: complex
    nu_hat: float
    gain_track: np.ndarray  # per-symbol gain estimates, starting with alpha_hat


def default_cfar() -> CfarConfig:
    """Detector defaults for a 32-element array on a 0.5° grid."""
    return CfarConfig(**DEFAULT_CFAR)


def angle_grid(step_deg: float = 0.5, limit_deg: float = 89.0) -> np.ndarray:
    """Uniform DoA grid from -limit to +limit degrees, in radians."""
    if not step_deg > 0:
        raise ParameterError(f'grid step must be positive, got {step_deg}')
    count = int(round(2.0 * limit_deg / step_deg))
    return np.deg2rad(np.linspace(-limit_deg, limit_deg, count + 1))


def delay_grid(ofdm: OfdmConfig, fraction: float = 0.1) -> np.ndarray:
    """Delay grid over [0, T_cp] with step fraction·Δτ."""
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f'delay grid fraction must lie in (0, 1], got {fraction}')
    step = ofdm.delta_tau * fraction
    count = int(np.floor(ofdm.T_cp / step + 1e-9))
    return np.arange(count + 1) * step


def default_grids(ofdm: OfdmConfig, cfar: CfarConfig, delay_fraction: float = 0.1) -> SearchGrids:
    return {'theta': angle_grid(cfar['grid_step_deg']), 'tau': delay_grid(ofdm, delay_fraction)}


def angular_spectrum(Y_1: np.ndarray, grid: np.ndarray, d_over_lambda: float = 0.5) -> np.ndarray:
    """Received power ‖Y_1·a*(θ)‖² for every grid angle.

    Args:
        Y_1: Pilot observation, shape (M, N_r).
        grid: DoA grid in radians.
        d_over_lambda: Element spacing in wavelengths.

    Returns:
        Non-negative spectrum, one value per grid angle.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError('angle grid is empty')
    if Y_1.ndim != 2:
        raise DimensionError(f'pilot observation must be 2-D, got shape {Y_1.shape}')
    beams = Y_1 @ steering_matrix(grid, Y_1.shape[1], d_over_lambda).conj()
    return np.sum(np.abs(beams) ** 2, axis=0)


@lru_cache(maxsize=256)
def cfar_scale(pfa: float, n_train: int, looks: int = 1) -> float:
    """Threshold multiplier on the training-cell mean for a target false-alarm rate.

    Cells are modelled as Gamma(looks) variables (a sum of ``looks``
    exponential terms). The cell-to-sum ratio is then Beta(looks,
    n_train·looks), which gives the exact multiplier. For one look this is
    n(pfa^(-1/n) - 1).

    Args:
        pfa: Per-cell false-alarm probability.
        n_train: Number of training cells averaged.
        looks: Number of exponential terms summed in every cell.

    Returns:
        Multiplier applied to the training mean.
    """
    ratio = betaincinv(looks, n_train * looks, 1.0 - pfa)
    return n_train * ratio / (1.0 - ratio)


def cfar_threshold(spectrum: np.ndarray, cfar: CfarConfig, looks: int = 1) -> np.ndarray:
    """Adaptive per-cell threshold of a cell-averaging CFAR detector.

    Training windows sit on both sides of the cell beyond the guard band and
    are truncated at the spectrum edges (no wrap).
    """
    spectrum = np.asarray(spectrum, dtype=float)
    length = spectrum.size
    guard, train = cfar['guard_cells'], cfar['training_cells']
    cumulative = np.concatenate([[0.0], np.cumsum(spectrum)])
    cells = np.arange(length)

    left_lo = np.clip(cells - guard - train, 0, length)
    left_hi = np.clip(cells - guard, 0, length)
    right_lo = np.clip(cells + guard + 1, 0, length)
    right_hi = np.clip(cells + guard + train + 1, 0, length)
    counts = (left_hi - left_lo) + (right_hi - right_lo)
    sums = (cumulative[left_hi] - cumulative[left_lo]) + (cumulative[right_hi] - cumulative[right_lo])

    threshold = np.full(length, np.inf)
    for n_train in np.unique(counts[counts > 0]):
        mask = counts == n_train
        threshold[mask] = cfar_scale(cfar['pfa'], int(n_train), looks) * sums[mask] / n_train
    return threshold


def cfar_detect(spectrum: np.ndarray, cfar: CfarConfig, looks: int = 1) -> list[int]:
    """Indices of spectrum peaks that pass the CFAR test.

    A cell is detected when it is a local maximum, exceeds its adaptive
    threshold and lies no more than ``min_rel_power_db`` below the global
    maximum.

    Args:
        spectrum: Non-negative spectrum values.
        cfar: Detector settings.
        looks: Exponential terms per cell (1 for generic spectra).

    Returns:
        Ascending list of detected indices (possibly empty).
    """
    spectrum = np.asarray(spectrum, dtype=float)
    span = 2 * (cfar['training_cells'] + cfar['guard_cells']) + 1
    if spectrum.size <= span:
        raise ParameterError(f'spectrum of length {spectrum.size} is too short for a CFAR window of {span}')

    left = np.concatenate([[-np.inf], spectrum[:-1]])
    right = np.concatenate([spectrum[1:], [-np.inf]])
    local_max = (spectrum > left) & (spectrum >= right)
    floor = spectrum.max() * 10.0 ** (cfar['min_rel_power_db'] / 10.0)
    hits = local_max & (spectrum > cfar_threshold(spectrum, cfar, looks)) & (spectrum >= floor)
    return [int(i) for i in np.flatnonzero(hits)]


def refine_peak(spectrum: np.ndarray, index: int, grid: np.ndarray) -> float:
    """Refine a grid peak by fitting a parabola through it and its neighbours."""
    if index <= 0 or index >= len(spectrum) - 1:
        return float(grid[index])
    below, centre, above = spectrum[index - 1], spectrum[index], spectrum[index + 1]
    curvature = below - 2.0 * centre + above
    if curvature >= 0:
        return float(grid[index])
    offset = np.clip(0.5 * (below - above) / curvature, -0.5, 0.5)
    step = 0.5 * (grid[index + 1] - grid[index - 1])
    return float(grid[index] + offset * step)


def merge_detections(thetas: list[float], powers: list[float], N_r: int,
                     d_over_lambda: float = 0.5) -> list[float]:
    """Drop detections within one beamwidth of a stronger one.

    Returns:
        Surviving angles, strongest first.
    """
    beamwidth = 1.0 / (N_r * d_over_lambda)
    kept: list[float] = []
    for i in np.argsort(powers, kind='stable')[::-1]:
        if all(abs(np.sin(thetas[i]) - np.sin(other)) >= beamwidth for other in kept):
            kept.append(thetas[i])
    return kept


def angle_mf(Y_n: np.ndarray, theta: float | np.ndarray, d_over_lambda: float = 0.5) -> np.ndarray:
    """Angle-domain matched filter y = Y·a*(θ)/N_r.

    Works on one observation (M, N_r) or a stacked frame (N, M, N_r); a
    vector of angles adds a trailing path axis.
    """
    N_r = Y_n.shape[-1]
    if np.ndim(theta):
        weights = steering_matrix(theta, N_r, d_over_lambda).conj()
    else:
        weights = steering_vector(theta, N_r, d_over_lambda).conj()
    return Y_n @ weights / N_r


def pilot_references(x_1: np.ndarray, taus: np.ndarray, ofdm: OfdmConfig) -> np.ndarray:
    """Delayed pilot references b̃(τ) = F_Mᴴ(x_1⊙b(τ)), one column per τ."""
    return ifft_unitary(np.asarray(x_1)[:, None] * delay_phasor(taus, ofdm.M, ofdm.delta_f), axis=0)


def estimate_delay(y_p1: np.ndarray, x_1: np.ndarray, grid: np.ndarray, ofdm: OfdmConfig) -> float:
    """Delay maximizing the pilot correlation |b̃(τ)ᴴ·y|; ties go to the smallest τ."""
    grid = np.asarray(grid, dtype=float)
    metric = np.abs(pilot_references(x_1, grid, ofdm).conj().T @ y_p1)
    return float(grid[int(np.argmax(metric))])


def estimate_gain(y_p1: np.ndarray, x_1: np.ndarray, tau_hat: float, ofdm: OfdmConfig) -> complex:
    """LS gain b̃(τ̂)ᴴ·y/(M·√P_T) of one beamformed pilot branch."""
    reference = ifft_unitary(np.asarray(x_1) * delay_phasor(tau_hat, ofdm.M, ofdm.delta_f))
    return complex(np.vdot(reference, y_p1) / (ofdm.M * np.sqrt(ofdm.P_T)))


def estimate_paths(Y_1: np.ndarray, x_1: np.ndarray, ofdm: OfdmConfig, cfar: CfarConfig,
                   grids: SearchGrids | None = None) -> list[PathEstimate]:
    """Detect paths in the pilot observation and estimate their parameters.

    Args:
        Y_1: Pilot observation, shape (M, N_r).
        x_1: Pilot symbols, shape (M,).
        ofdm: Link configuration.
        cfar: Detector settings.
        grids: Angle and delay search grids (defaults derived from settings).

    Returns:
        One estimate per detected path, strongest first, with ν̂ = 0.
    """
    if Y_1.shape != (ofdm.M, ofdm.N_r):
        raise DimensionError(f'pilot observation must have shape ({ofdm.M}, {ofdm.N_r}), got {Y_1.shape}')
    if grids is None:
        grids = default_grids(ofdm, cfar)

    spectrum = angular_spectrum(Y_1, grids['theta'], ofdm.d_over_lambda)
    peaks = cfar_detect(spectrum, cfar, looks=ofdm.M)
    if not peaks:
        raise DetectionError('no paths detected')

    thetas = [refine_peak(spectrum, i, grids['theta']) for i in peaks]
    thetas = merge_detections(thetas, [spectrum[i] for i in peaks], ofdm.N_r, ofdm.d_over_lambda)

    estimates: list[PathEstimate] = []
    for theta in thetas:
        y_p1 = angle_mf(Y_1, theta, ofdm.d_over_lambda)
        tau_hat = estimate_delay(y_p1, x_1, grids['tau'], ofdm)
        alpha_hat = estimate_gain(y_p1, x_1, tau_hat, ofdm)
        estimates.append({
            'theta_hat': theta,
            'tau_hat': tau_hat,
            'alpha_hat': alpha_hat,
            'nu_hat': 0.0,
            'gain_track': np.array([alpha_hat]),
        })

    if config.debug_mode:
        found = ', '.join(f'{np.rad2deg(e["theta_hat"]):.2f}deg/{e["tau_hat"] * 1e6:.3f}us' for e in estimates)
        print(f'[ESTIMATOR] {len(peaks)} CFAR peaks, {len(estimates)} paths: {found}')

    return estimates

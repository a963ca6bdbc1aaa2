"""Channel realizations and synthesis of the received time-spatial grid."""

from typing import TypedDict

import numpy as np

from components.errors import DimensionError, ParameterError
from components.signal_core import (
    OfdmConfig, delay_phasor, doppler_phasor, doppler_spread, ifft_unitary,
    qam_map, steering_matrix,
)
from components.utils import db_to_linear
from config import config

REFERENCE_ANGLES_DEG = [10.0, 50.0, -30.0, 20.0]
REFERENCE_DELAYS_US = [0.0, 0.9, 2.4, 3.0]
REFERENCE_POWERS_DB = [0.0, -1.0, -5.0, -7.0]


class ScenarioSpec(TypedDict):
    """Geometry, speed and target SNR of a multipath scenario."""
    v_max_kmh: float
    snr_db: float
    angles_deg: list[float]
    delays_us: list[float]
    powers_db: list[float]


class PathParams(TypedDict):
    """One propagation path, constant over a geometric-coherence interval."""
    theta: float
    tau: float
    nu: float
    alpha: complex
    avg_power: float


class ChannelRealization(TypedDict):
    paths: list[PathParams]
    sigma2: float


class ObservationFrame(TypedDict):
    """Received frame. ``channel`` is ground truth for metrics only."""
    Y: np.ndarray  # (N, M, N_r), Y[n-1] is the observation of symbol n
    config: OfdmConfig
    channel: ChannelRealization


def reference_scenario(v_max_kmh: float, snr_db: float) -> ScenarioSpec:
    """Four-path reference scenario at the given speed and SNR."""
    return {
        'v_max_kmh': v_max_kmh,
        'snr_db': snr_db,
        'angles_deg': list(REFERENCE_ANGLES_DEG),
        'delays_us': list(REFERENCE_DELAYS_US),
        'powers_db': list(REFERENCE_POWERS_DB),
    }


def noise_variance_for_snr(alpha: np.ndarray, P_T: float, snr: float) -> float:
    """Noise variance that puts the realized gains at a target SNR.

    Args:
        alpha: Complex path gains.
        P_T: Average transmit power.
        snr: Target SNR (linear, > 0).

    Returns:
        σ² = ‖α‖²·P_T/snr.
    """
    if not snr > 0:
        raise ParameterError(f'SNR must be positive, got {snr}')
    return float(np.sum(np.abs(np.asarray(alpha)) ** 2) * P_T / snr)


def draw_channel(ofdm: OfdmConfig, scenario: ScenarioSpec, rng: np.random.Generator) -> ChannelRealization:
    """Draw path Dopplers and gain phases for a scenario.

    Each Doppler follows the cosine law ν = σ_ν·cos(ψ) with ψ ~ U[0, 2π),
    gains have deterministic magnitude √P_p and uniform phase.

    Args:
        ofdm: Link configuration.
        scenario: Path geometry, speed (km/h) and SNR (dB).
        rng: Random generator.

    Returns:
        Channel realization with σ² set from the realized gains.
    """
    if scenario['v_max_kmh'] < 0:
        raise ParameterError(f"v_max must be non-negative, got {scenario['v_max_kmh']}")
    num_paths = len(scenario['angles_deg'])
    if not num_paths == len(scenario['delays_us']) == len(scenario['powers_db']):
        raise DimensionError('scenario angle, delay and power lists differ in length')

    sigma_nu = doppler_spread(ofdm.f_c, scenario['v_max_kmh'])
    nus = sigma_nu * np.cos(rng.uniform(0.0, 2.0 * np.pi, num_paths))
    powers = db_to_linear(np.asarray(scenario['powers_db'], dtype=float))
    alphas = np.sqrt(powers) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, num_paths))
    taus = np.asarray(scenario['delays_us'], dtype=float) * 1e-6
    if np.any(taus < 0) or np.any(taus > ofdm.T_cp):
        raise ParameterError(f'path delays {taus} must lie within [0, T_cp={ofdm.T_cp}]')

    paths: list[PathParams] = [
        {
            'theta': float(np.deg2rad(angle)),
            'tau': float(tau),
            'nu': float(nu),
            'alpha': complex(alpha),
            'avg_power': float(power),
        }
        for angle, tau, nu, alpha, power in zip(scenario['angles_deg'], taus, nus, alphas, powers)
    ]
    sigma2 = noise_variance_for_snr(alphas, ofdm.P_T, db_to_linear(scenario['snr_db']))

    if config.debug_mode:
        print(f'[CHANNEL] {num_paths} paths, sigma_nu={sigma_nu:.1f} Hz, sigma2={sigma2:.4g}')

    return {'paths': paths, 'sigma2': sigma2}


def single_path_channel(theta: float, tau: float, nu: float, alpha: complex = 1.0,
                        sigma2: float = 0.0) -> ChannelRealization:
    """Build a one-path channel with fixed parameters."""
    return {
        'paths': [{'theta': theta, 'tau': tau, 'nu': nu, 'alpha': complex(alpha),
                   'avg_power': float(abs(alpha) ** 2)}],
        'sigma2': sigma2,
    }


def symbol_start_time(n: int, ofdm: OfdmConfig) -> float:
    """Start time t_n = n·T_cp + (n-1)·T of symbol n (n >= 1)."""
    return n * ofdm.T_cp + (n - 1) * ofdm.T


def path_gain_at(path: PathParams, n: int, ofdm: OfdmConfig) -> complex:
    """Slow-time gain α·e^{j2πν·t_n} of a path at symbol n."""
    return path['alpha'] * np.exp(2j * np.pi * path['nu'] * symbol_start_time(n, ofdm))


def generate_observation(x_n: np.ndarray, n: int, channel: ChannelRealization, ofdm: OfdmConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """Synthesize the M×N_r observation of symbol n.

    Each path contributes √P_T·α̃_n·[F_Mᴴ(x⊙b(τ))⊙c(ν)]·a(θ)ᵀ; noise is
    i.i.d. circular Gaussian with variance σ².

    Args:
        x_n: Transmitted frequency-domain symbols, shape (M,).
        n: Symbol index (>= 1).
        channel: Channel realization.
        ofdm: Link configuration.
        rng: Random generator for the noise.

    Returns:
        Complex (M, N_r) observation.
    """
    x_n = np.asarray(x_n, dtype=complex)
    if x_n.shape != (ofdm.M,):
        raise DimensionError(f'symbol vector must have shape ({ofdm.M},), got {x_n.shape}')
    if n < 1:
        raise ParameterError(f'symbol index starts at 1, got {n}')

    paths = channel['paths']
    Y = np.zeros((ofdm.M, ofdm.N_r), dtype=complex)
    if paths:
        taus = np.array([p['tau'] for p in paths])
        nus = np.array([p['nu'] for p in paths])
        thetas = np.array([p['theta'] for p in paths])
        gains = np.array([path_gain_at(p, n, ofdm) for p in paths])

        branches = ifft_unitary(x_n[:, None] * delay_phasor(taus, ofdm.M, ofdm.delta_f), axis=0)
        branches *= doppler_phasor(nus, ofdm.M, ofdm.delta_tau) * (np.sqrt(ofdm.P_T) * gains)
        Y += branches @ steering_matrix(thetas, ofdm.N_r, ofdm.d_over_lambda).T

    scale = np.sqrt(channel['sigma2'] / 2.0)
    noise = rng.standard_normal((ofdm.M, ofdm.N_r)) + 1j * rng.standard_normal((ofdm.M, ofdm.N_r))
    return Y + scale * noise


def generate_frame(pilot: np.ndarray, data_bits: np.ndarray, channel: ChannelRealization, ofdm: OfdmConfig,
                   rng: np.random.Generator) -> tuple[ObservationFrame, np.ndarray]:
    """Synthesize a frame: block pilot at n = 1, then N-1 data symbols.

    Args:
        pilot: Known pilot symbols, shape (M,).
        data_bits: Bits of symbols 2..N, shape (N-1, 2M).
        channel: Channel realization shared by the whole frame.
        ofdm: Link configuration.
        rng: Random generator for the noise.

    Returns:
        Tuple of (frame, transmitted symbols of shape (N, M)).
    """
    pilot = np.asarray(pilot, dtype=complex)
    if pilot.shape != (ofdm.M,):
        raise DimensionError(f'pilot must have shape ({ofdm.M},), got {pilot.shape}')
    data_bits = np.asarray(data_bits)
    if data_bits.shape != (ofdm.N - 1, ofdm.bits_per_symbol):
        raise DimensionError(
            f'data bits must have shape ({ofdm.N - 1}, {ofdm.bits_per_symbol}), got {data_bits.shape}')
    if any(not 0.0 <= p['tau'] <= ofdm.T_cp for p in channel['paths']):
        raise ParameterError('a path delay exceeds the cyclic prefix')

    symbols = np.vstack([pilot[None, :], qam_map(data_bits)])
    Y = np.stack([generate_observation(symbols[n - 1], n, channel, ofdm, rng) for n in range(1, ofdm.N + 1)])
    frame: ObservationFrame = {'Y': Y, 'config': ofdm, 'channel': channel}
    return frame, symbols

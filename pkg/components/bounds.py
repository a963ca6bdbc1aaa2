"""Modified Cramér-Rao lower bound on per-path Doppler estimation.

Conditional Fisher information follows from the Slepian-Bangs formula for a
path observed in Gaussian noise plus inter-path interference; the data
symbols are averaged out analytically (unit-energy symbols) or by sampling.
"""

from typing import TypedDict

import numpy as np

from components.channel import ChannelRealization, symbol_start_time
from components.errors import ParameterError
from components.signal_core import OfdmConfig, delay_phasor, ifft_unitary, make_pilot, steering_matrix
from config import config


class FimTerms(TypedDict):
    ipi_power: np.ndarray
    cfi_pilot: np.ndarray
    aggregated: np.ndarray
    mcrlb: np.ndarray
    weighted_mcrlb: float


def ipi_power(p: int, channel: ChannelRealization, N_r: int, P_T: float = 1.0, d_over_lambda: float = 0.5,
              mf_normalized: bool = False) -> float:
    """Inter-path interference power P_T|α_p|²Σ_{i≠p}|a(θ_p)ᵀa*(θ_i)|².

    Args:
        p: Path index.
        channel: Channel realization.
        N_r: Number of antennas.
        P_T: Transmit power.
        d_over_lambda: Element spacing in wavelengths.
        mf_normalized: Divide the steering inner products by N_r².

    Returns:
        Interference power (zero for a single path).
    """
    paths = channel['paths']
    if not 0 <= p < len(paths):
        raise ParameterError(f'path index {p} out of range for {len(paths)} paths')
    thetas = np.array([path['theta'] for path in paths])
    steering = steering_matrix(thetas, N_r, d_over_lambda)
    leakage = np.abs(steering[:, p] @ steering.conj()) ** 2
    leakage[p] = 0.0
    power = P_T * abs(paths[p]['alpha']) ** 2 * float(np.sum(leakage))
    return power / N_r ** 2 if mf_normalized else power


def effective_noise(p: int, channel: ChannelRealization, ofdm: OfdmConfig, mf_normalized: bool = False) -> float:
    """Noise-plus-interference power seen by path p."""
    interference = ipi_power(p, channel, ofdm.N_r, ofdm.P_T, ofdm.d_over_lambda, mf_normalized)
    noise = channel['sigma2'] / ofdm.N_r if mf_normalized else channel['sigma2']
    if not noise + interference > 0:
        raise ParameterError('noise plus interference power is zero; Fisher information is unbounded')
    return noise + interference


def _weighted_time_energy(x_n: np.ndarray, n: int, tau: float, ofdm: OfdmConfig) -> float:
    """Σ_q (t_n + qΔτ)²·|[F_Mᴴ(x_n⊙b(τ))]_q|²."""
    samples = ifft_unitary(np.asarray(x_n) * delay_phasor(tau, ofdm.M, ofdm.delta_f))
    times = symbol_start_time(n, ofdm) + np.arange(ofdm.M) * ofdm.delta_tau
    return float(np.sum(times ** 2 * np.abs(samples) ** 2))


def cfi_symbol(p: int, n: int, x_n: np.ndarray, channel: ChannelRealization, ofdm: OfdmConfig,
               mf_normalized: bool = False) -> float:
    """Conditional Fisher information on ν_p carried by symbol n.

    Args:
        p: Path index.
        n: Symbol index (1 is the pilot).
        x_n: Symbols of that OFDM symbol.
        channel: Channel realization.
        ofdm: Link configuration.
        mf_normalized: Use the beamformer-normalized noise and IPI.

    Returns:
        8π²|α_p|²P_T/(σ² + P_IPI)·Σ_q (t_n + qΔτ)²|[F_Mᴴ(x_n⊙b(τ_p))]_q|².
    """
    path = channel['paths'][p]
    scale = 8.0 * np.pi ** 2 * abs(path['alpha']) ** 2 * ofdm.P_T / effective_noise(p, channel, ofdm, mf_normalized)
    return scale * _weighted_time_energy(x_n, n, path['tau'], ofdm)


def cfi_pilot(p: int, x_1: np.ndarray, channel: ChannelRealization, ofdm: OfdmConfig,
              mf_normalized: bool = False) -> float:
    """Fisher information of the deterministic pilot symbol."""
    return cfi_symbol(p, 1, x_1, channel, ofdm, mf_normalized)


def theta_norm_sq(N: int, M: int, T_cp: float, T: float) -> float:
    """‖Θ‖² with Θ_i = t_n + qΔτ for i = M(n-2) + q, n = 2..N, q = 0..M-1."""
    index = np.arange((N - 1) * M)
    n = index // M + 2
    q = index % M
    theta = n * T_cp + (n - 1) * T + q * (T / M)
    return float(np.sum(theta ** 2))


def aggregated_cfi(p: int, x_1: np.ndarray, channel: ChannelRealization, ofdm: OfdmConfig,
                   data_model: str = 'expected', rng: np.random.Generator | None = None, draws: int = 64,
                   mf_normalized: bool = False) -> float:
    """Fisher information of the whole frame, averaged over the data symbols.

    Args:
        p: Path index.
        x_1: Pilot symbols.
        channel: Channel realization.
        ofdm: Link configuration.
        data_model: 'expected' uses E|[F_Mᴴ(x⊙b)]_q|² = 1; 'sampled' averages
            over random 4-QAM frames.
        rng: Generator for the sampled mode.
        draws: Number of sampled frames.
        mf_normalized: Use the beamformer-normalized noise and IPI.

    Returns:
        Aggregated information I_p.
    """
    path = channel['paths'][p]
    scale = 8.0 * np.pi ** 2 * path['avg_power'] * ofdm.P_T / effective_noise(p, channel, ofdm, mf_normalized)
    pilot_term = _weighted_time_energy(x_1, 1, path['tau'], ofdm)

    if data_model == 'expected':
        data_term = theta_norm_sq(ofdm.N, ofdm.M, ofdm.T_cp, ofdm.T)
    elif data_model == 'sampled':
        if rng is None:
            raise ParameterError('sampled data model needs a random generator')
        data_term = np.mean([
            sum(_weighted_time_energy(make_pilot(ofdm.M, rng), n, path['tau'], ofdm) for n in range(2, ofdm.N + 1))
            for _ in range(draws)
        ])
    else:
        raise ParameterError(f"data_model must be 'expected' or 'sampled', got {data_model!r}")
    return float(scale * (pilot_term + data_term))


def mcrlb_per_path(channel: ChannelRealization, ofdm: OfdmConfig, x_1: np.ndarray,
                   mf_normalized: bool = False) -> np.ndarray:
    """MCRLB_p = 1/I_p for every path (Hz²)."""
    information = np.array([aggregated_cfi(p, x_1, channel, ofdm, mf_normalized=mf_normalized)
                            for p in range(len(channel['paths']))])
    if np.any(information <= 0):
        raise ParameterError('a path carries no Doppler information')
    return 1.0 / information


def mcrlb_weighted(channel: ChannelRealization, ofdm: OfdmConfig, x_1: np.ndarray,
                   mf_normalized: bool = False) -> float:
    """Power-weighted MCRLB Σ_p P_p·MCRLB_p/Σ_p P_p in Hz²."""
    powers = np.array([path['avg_power'] for path in channel['paths']])
    bound = float(np.sum(powers * mcrlb_per_path(channel, ofdm, x_1, mf_normalized)) / np.sum(powers))
    if config.debug_mode:
        print(f'[BOUNDS] weighted MCRLB {bound:.4g} Hz^2 (RMSE {np.sqrt(bound):.3g} Hz)')
    return bound


def fim_terms(channel: ChannelRealization, ofdm: OfdmConfig, x_1: np.ndarray,
              mf_normalized: bool = False) -> FimTerms:
    """Collect every bound ingredient for reporting."""
    num_paths = len(channel['paths'])
    mcrlb = mcrlb_per_path(channel, ofdm, x_1, mf_normalized)
    powers = np.array([path['avg_power'] for path in channel['paths']])
    return {
        'ipi_power': np.array([ipi_power(p, channel, ofdm.N_r, ofdm.P_T, ofdm.d_over_lambda, mf_normalized)
                               for p in range(num_paths)]),
        'cfi_pilot': np.array([cfi_pilot(p, x_1, channel, ofdm, mf_normalized) for p in range(num_paths)]),
        'aggregated': 1.0 / mcrlb,
        'mcrlb': mcrlb,
        'weighted_mcrlb': float(np.sum(powers * mcrlb) / np.sum(powers)),
    }

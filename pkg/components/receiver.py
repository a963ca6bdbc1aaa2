"""Decision-directed detection with per-path Doppler tracking.

Each path is isolated by beamforming, its Doppler-induced ICI and delay are
compensated, and the branches are combined by MRC. Gains are propagated
symbol to symbol, refreshed by LS against the hard decisions, and the
Doppler of every path is re-estimated from the gain phase drift across a
sliding window of K symbols.
"""

from typing import TypedDict

import numpy as np

from components.channel import ObservationFrame
from components.errors import DetectionError, ParameterError
from components.estimator import PathEstimate, angle_mf
from components.signal_core import (
    OfdmConfig, delay_phasor, doppler_phasor, fft_unitary, ifft_unitary, qam_slice,
)
from config import config


class GainTrack(TypedDict):
    gains: np.ndarray  # (P, N), column n-1 holds the estimate for symbol n
    nu_hat: np.ndarray  # (P,)
    K: int


class DecodedFrame(TypedDict):
    """Receiver output for one frame."""
    symbols: np.ndarray  # (N-1, M) hard decisions for n = 2..N
    bits: np.ndarray  # (N-1, 2M)
    nu_hat: np.ndarray  # final Doppler per path
    doppler_trajectory: np.ndarray  # (windows, P), one row per sliding window
    gain_track: GainTrack
    emission_order: list[int]
    clamped_gains: int


def zero_doppler_limit(T_prime: float) -> float:
    """Largest |ν| decodable with zero-Doppler init: π/4 rotation per symbol."""
    return 1.0 / (8.0 * T_prime)


def window_length(sigma_nu: float, T_prime: float, N: int) -> int:
    """Sliding-window length K = min(⌊1 + 1/(2σ_νT′)⌋, N/2), at least 2.

    Args:
        sigma_nu: Doppler spread (Hz).
        T_prime: Total symbol duration (s).
        N: Symbols per frame.

    Returns:
        Window length K.
    """
    if sigma_nu < 0:
        raise ParameterError(f'Doppler spread must be non-negative, got {sigma_nu}')
    K = N // 2
    if sigma_nu > 0:
        K = min(int(np.floor(1.0 + 1.0 / (2.0 * sigma_nu * T_prime))), K)
    if K < 2:
        if config.debug_mode:
            print(f'[RECEIVER] Window length {K} clamped to minimum 2')
        K = 2
    return K


def _as_columns(vector: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Lift a (M,) vector to (M, 1) when it multiplies an (M, P) matrix."""
    if vector.ndim == 1 and like.ndim == 2:
        return vector[:, None]
    return vector


def ici_compensate(y_pn: np.ndarray, nu_hat: float | np.ndarray, delta_tau: float) -> np.ndarray:
    """Remove the fast-time Doppler ramp: y⊙c*(ν̂).

    ``y_pn`` may be one branch (M,) or one column per path (M, P) with a
    matching vector ``nu_hat``; a vector ``nu_hat`` with a single branch
    evaluates every hypothesis at once.
    """
    y_pn = np.asarray(y_pn)
    phasor = doppler_phasor(nu_hat, y_pn.shape[0], delta_tau).conj()
    return _as_columns(y_pn, phasor) * _as_columns(phasor, y_pn)


def delay_compensate(y_ici: np.ndarray, tau_hat: float | np.ndarray, delta_f: float) -> np.ndarray:
    """Single-tap matched filter in frequency: (F_M·y)⊙b*(τ̂)."""
    spectrum = fft_unitary(np.asarray(y_ici), axis=0)
    phasor = delay_phasor(tau_hat, spectrum.shape[0], delta_f).conj()
    return _as_columns(spectrum, phasor) * _as_columns(phasor, spectrum)


def mrc_combine(x_hat_paths: np.ndarray | list[np.ndarray], gains: np.ndarray | list[complex]) -> np.ndarray:
    """Maximum ratio combining Σ_p conj(α_p)·x̂_p.

    Args:
        x_hat_paths: Per-path symbol estimates, an (M, P) matrix or a list of
            P vectors.
        gains: Per-path complex gains.

    Returns:
        Combined (M,) symbol estimate (not normalized).
    """
    if isinstance(x_hat_paths, (list, tuple)):
        if not x_hat_paths:
            raise ParameterError('MRC needs at least one path')
        x_hat_paths = np.stack(x_hat_paths, axis=1)
    gains = np.atleast_1d(np.asarray(gains))
    if gains.size == 0 or x_hat_paths.shape[1] != gains.size:
        raise ParameterError(f'{x_hat_paths.shape[1]} branches but {gains.size} gains')
    return x_hat_paths @ gains.conj()


def ls_gain_update(y_pn: np.ndarray, x_dagger: np.ndarray, tau_hat: float | np.ndarray,
                   nu_hat: float | np.ndarray, ofdm: OfdmConfig) -> complex | np.ndarray:
    """LS gain [F_Mᴴ(x†⊙b(τ̂))⊙c(ν̂)]ᴴ·y/(M·√P_T) against hard decisions.

    With vector ``tau_hat``/``nu_hat`` and (M, P) branches, one gain per path
    is returned.
    """
    b = delay_phasor(tau_hat, ofdm.M, ofdm.delta_f)
    reference = ifft_unitary(_as_columns(np.asarray(x_dagger), b) * b, axis=0)
    reference *= doppler_phasor(nu_hat, ofdm.M, ofdm.delta_tau)
    gains = np.sum(reference.conj() * y_pn, axis=0) / (ofdm.M * np.sqrt(ofdm.P_T))
    return complex(gains) if np.ndim(gains) == 0 else gains


def doppler_from_gains(alpha_end: complex | np.ndarray, alpha_start: complex | np.ndarray, K: int,
                       T_prime: float) -> float | np.ndarray:
    """Doppler from the phase drift of the gain over K-1 symbols.

    Returns:
        ∠(α_end·α_start*)/(2π(K-1)T′); aliases once |ν|·2π(K-1)T′ exceeds π.
    """
    if K < 2:
        raise ParameterError(f'window length must be >= 2, got {K}')
    alpha_end, alpha_start = np.asarray(alpha_end), np.asarray(alpha_start)
    if np.any(alpha_end == 0) or np.any(alpha_start == 0):
        raise ParameterError('Doppler is undefined for a zero gain')
    nu = np.angle(alpha_end * alpha_start.conj()) / (2.0 * np.pi * (K - 1) * T_prime)
    return float(nu) if nu.ndim == 0 else nu


def branch_outputs(Y: np.ndarray, thetas: np.ndarray, d_over_lambda: float = 0.5) -> np.ndarray:
    """Beamform every symbol of a frame towards every path, shape (N, M, P)."""
    return angle_mf(Y, np.atleast_1d(np.asarray(thetas, dtype=float)), d_over_lambda)


def emission_order(N: int, K: int) -> list[int]:
    """Order in which symbols 2..N are emitted by the two-branch decoder.

    The sliding-window branch emits n = 2..N-K, the tail branch emits the
    last K symbols N-K+1..N.
    """
    if K < 2 or N < K + 2:
        raise ParameterError(f'need 2 <= K and N >= K + 2, got N={N}, K={K}')
    return list(range(2, N - K + 1)) + list(range(N - K + 1, N + 1))


def detect_frame(frame: ObservationFrame, paths: list[PathEstimate], K: int, ofdm: OfdmConfig) -> DecodedFrame:
    """Decode symbols 2..N of a frame with decision-directed Doppler tracking.

    For n < N-K+1 the gains are propagated by e^{j2πν̂T′} over the window
    n..n+K-1, each symbol is decoded by MRC and its gains are LS-refreshed;
    ν̂ is then re-estimated from the gain drift across the window and symbol
    n is re-detected and emitted. At n = N-K+1 the gains are extrapolated
    from symbol n-1 and the last K symbols are decoded.

    A path that starts from ν̂ = 0 predicts its gains in the first window
    from the mean phase step observed since the pilot, so only symbol 2 is
    decided against an unrotated gain. That keeps the zero-Doppler start
    usable up to a π/4 rotation per symbol.

    Args:
        frame: Observation frame; only ``Y`` is read.
        paths: Path estimates carrying the initial ν̂ and pilot gain.
        K: Window length.
        ofdm: Link configuration.

    Returns:
        Decoded frame with hard decisions, bits and the Doppler trajectory.
    """
    if not paths:
        raise DetectionError('no paths to decode')
    Y = frame['Y']
    N = Y.shape[0]
    order = emission_order(N, K)

    thetas = np.array([p['theta_hat'] for p in paths])
    taus = np.array([p['tau_hat'] for p in paths])
    nus = np.array([p['nu_hat'] for p in paths], dtype=float)
    gains = np.zeros((len(paths), N + 1), dtype=complex)  # column n is symbol n
    gains[:, 1] = [p['alpha_hat'] for p in paths]
    if not np.all(np.isfinite(gains[:, 1])) or np.any(gains[:, 1] == 0):
        raise DetectionError('initial path gain is zero or not finite')

    branches = branch_outputs(Y, thetas, ofdm.d_over_lambda)
    decisions = np.zeros((N + 1, ofdm.M), dtype=complex)
    bits = np.zeros((N + 1, ofdm.bits_per_symbol), dtype=np.int8)
    trajectory = []
    emitted = []
    clamped = 0

    def equalize(m: int, nu: np.ndarray) -> np.ndarray:
        return delay_compensate(ici_compensate(branches[m - 1], nu, ofdm.delta_tau), taus, ofdm.delta_f)

    def emit(m: int, gain: np.ndarray, nu: np.ndarray) -> np.ndarray:
        decisions[m], bits[m] = qam_slice(mrc_combine(equalize(m, nu), gain))
        emitted.append(m)
        return decisions[m]

    # zero-Doppler starts share the pilot's LS reference in the first window,
    # so their gain phase steps are unbiased and drive the prediction there
    from_drift = nus == 0.0
    drift = np.zeros(len(paths))

    tail = N - K + 1
    for n in range(2, tail):
        for k in range(1, K + 1):
            m = n + k - 1
            rate = nus
            if n == 2 and m > 2:
                rate = np.where(from_drift, drift / (2.0 * np.pi * (m - 2) * ofdm.T_prime), nus)
            gains[:, m] = gains[:, m - 1] * np.exp(2j * np.pi * rate * ofdm.T_prime)
            x_dagger, _ = qam_slice(mrc_combine(equalize(m, nus), gains[:, m]))
            refreshed = ls_gain_update(branches[m - 1], x_dagger, taus, nus, ofdm)
            usable = np.isfinite(refreshed) & (refreshed != 0)
            clamped += int(np.count_nonzero(~usable))
            gains[:, m] = np.where(usable, refreshed, gains[:, m])
            if n == 2:
                drift += np.angle(gains[:, m] * gains[:, m - 1].conj())
        nus = doppler_from_gains(gains[:, n + K - 1], gains[:, n], K, ofdm.T_prime)
        trajectory.append(nus.copy())
        emit(n, gains[:, n], nus)

    anchor = gains[:, tail - 1].copy()
    for k in range(1, K + 1):
        m = tail + k - 1
        gains[:, m] = anchor * np.exp(2j * np.pi * nus * k * ofdm.T_prime)
        emit(m, gains[:, m], nus)

    if emitted != order:
        raise DetectionError(f'decoder emitted symbols {emitted}, expected {order}')
    if clamped and config.debug_mode:
        print(f'[RECEIVER] {clamped} LS gain updates clamped to their prediction')

    return {
        'symbols': decisions[2:],
        'bits': bits[2:],
        'nu_hat': nus,
        'doppler_trajectory': np.array(trajectory).reshape(-1, len(paths)),
        'gain_track': {'gains': gains[:, 1:], 'nu_hat': nus.copy(), 'K': K},
        'emission_order': emitted,
        'clamped_gains': clamped,
    }


def detect_with_known_gains(Y: np.ndarray, thetas: np.ndarray, taus: np.ndarray, nus: np.ndarray,
                            gains: np.ndarray, ofdm: OfdmConfig) -> tuple[np.ndarray, np.ndarray]:
    """Compensate, combine and slice symbols 2..N with externally known CSI.

    Args:
        Y: Frame observations, shape (N, M, N_r).
        thetas: Path angles.
        taus: Path delays.
        nus: Path Dopplers.
        gains: Per-path, per-symbol gains, shape (P, N).
        ofdm: Link configuration.

    Returns:
        Tuple of (hard symbols (N-1, M), bits (N-1, 2M)).
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    nus = np.atleast_1d(np.asarray(nus, dtype=float))
    branches = branch_outputs(Y, thetas, ofdm.d_over_lambda)
    combined = np.stack([
        mrc_combine(delay_compensate(ici_compensate(branches[n - 1], nus, ofdm.delta_tau), taus, ofdm.delta_f),
                    gains[:, n - 1])
        for n in range(2, Y.shape[0] + 1)
    ])
    return qam_slice(combined)

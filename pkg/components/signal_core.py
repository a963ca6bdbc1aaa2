"""Deterministic signal primitives shared by every other module.

Transform matrices, array/delay/Doppler phasors, Gray 4-QAM mapping and
slicing, and the Gaussian tail function. Phasor helpers accept a scalar
parameter (returning a vector) or a vector of parameters (returning one
column per parameter), so callers can process all paths at once.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sp_fft
from scipy.linalg import dft
from scipy.special import erfc

from components.errors import DimensionError, ParameterError
from components.utils import kmh_to_ms

SPEED_OF_LIGHT = 3e8
BITS_PER_QAM4 = 2
QAM_SCALE = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class OfdmConfig:
    """Carrier, array and grid parameters of one simulated link.

    Defaults are the high-mobility V2X setup (5.9 GHz carrier, 32-antenna
    half-wavelength ULA, 128 subcarriers at 30 kHz, 32 symbols per frame).
    """

    f_c: float = 5.9e9
    M: int = 128
    N: int = 32
    delta_f: float = 30e3
    T_cp: float = 5e-6
    N_r: int = 32
    P_T: float = 1.0
    mod_order: int = 4

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ParameterError(f'M must be >= 2, got {self.M}')
        if self.N < 4:
            raise ParameterError(f'N must be >= 4, got {self.N}')
        if self.N_r < 1:
            raise ParameterError(f'N_r must be >= 1, got {self.N_r}')
        for name in ('f_c', 'delta_f', 'T_cp', 'P_T'):
            if not getattr(self, name) > 0:
                raise ParameterError(f'{name} must be positive, got {getattr(self, name)}')
        if self.mod_order != 4:
            raise ParameterError(f'only 4-QAM is supported, got mod_order={self.mod_order}')

    @classmethod
    def reference(cls) -> 'OfdmConfig':
        """Return the reference simulation setup."""
        return cls()

    def with_overrides(self, **overrides) -> 'OfdmConfig':
        """Return a copy with some fields replaced (validated again)."""
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise ParameterError(f'unknown OFDM fields: {sorted(unknown)}')
        return replace(self, **overrides)

    @property
    def T(self) -> float:
        """Useful symbol duration 1/Δf (s)."""
        return 1.0 / self.delta_f

    @property
    def T_prime(self) -> float:
        """Total symbol duration including the cyclic prefix (s)."""
        return self.T + self.T_cp

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def d(self) -> float:
        """Antenna spacing, fixed at half a wavelength (m)."""
        return self.wavelength / 2.0

    @property
    def d_over_lambda(self) -> float:
        return 0.5

    @property
    def delta_tau(self) -> float:
        """Delay resolution T/M (s)."""
        return self.T / self.M

    @property
    def B(self) -> float:
        """Occupied bandwidth M·Δf (Hz)."""
        return self.M * self.delta_f

    @property
    def bits_per_symbol(self) -> int:
        return self.M * BITS_PER_QAM4


def dft_matrix(M: int) -> np.ndarray:
    """Build the unitary M-point DFT matrix [F]_{m,q} = e^{-j2πmq/M}/√M.

    Args:
        M: Transform size (>= 1).

    Returns:
        Complex (M, M) matrix with F·Fᴴ = I.
    """
    if M < 1:
        raise ParameterError(f'DFT size must be >= 1, got {M}')
    return dft(M, scale='sqrtn')


def fft_unitary(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Apply F_M along ``axis`` in O(M log M)."""
    return sp_fft.fft(x, axis=axis, norm='ortho')


def ifft_unitary(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Apply F_Mᴴ along ``axis`` in O(M log M)."""
    return sp_fft.ifft(x, axis=axis, norm='ortho')


def _phase_ramp(rate: float | np.ndarray, length: int, sign: float) -> np.ndarray:
    """Return e^{sign·j2π·q·rate} for q = 0..length-1.

    A scalar rate gives a (length,) vector, a vector of rates gives a
    (length, len(rate)) matrix with one column per rate.
    """
    q = np.arange(length)
    return np.exp(sign * 2j * np.pi * np.multiply.outer(q, np.asarray(rate, dtype=float)))


def steering_vector(theta: float, N_r: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """ULA response a(θ) with element n = e^{j2π(d/λ)n·sinθ}.

    Args:
        theta: Direction of arrival in radians.
        N_r: Number of antennas (>= 1).
        d_over_lambda: Element spacing in wavelengths.

    Returns:
        Complex (N_r,) vector with squared norm N_r.
    """
    if N_r < 1:
        raise ParameterError(f'N_r must be >= 1, got {N_r}')
    return _phase_ramp(d_over_lambda * np.sin(theta), N_r, 1.0)


def steering_matrix(thetas: np.ndarray, N_r: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """Stack steering vectors as columns, shape (N_r, len(thetas))."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return steering_vector(thetas, N_r, d_over_lambda)


def delay_phasor(tau: float | np.ndarray, M: int, delta_f: float) -> np.ndarray:
    """Frequency-domain delay vector b(τ) with element q = e^{-j2πqτΔf}."""
    return _phase_ramp(np.asarray(tau, dtype=float) * delta_f, M, -1.0)


def doppler_phasor(nu: float | np.ndarray, M: int, delta_tau: float) -> np.ndarray:
    """Fast-time Doppler vector c(ν) with element q = e^{j2πqνΔτ}."""
    return _phase_ramp(np.asarray(nu, dtype=float) * delta_tau, M, 1.0)


def qam_map(bits: np.ndarray) -> np.ndarray:
    """Gray-map bit pairs to unit-energy 4-QAM symbols.

    Bit pair (b0, b1) selects the signs of the real and imaginary parts:
    (0, 0) -> (1+j)/√2, (0, 1) -> (1-j)/√2, (1, 0) -> (-1+j)/√2,
    (1, 1) -> (-1-j)/√2. Leading axes are kept, so a (N-1, 2M) bit matrix
    maps to a (N-1, M) symbol matrix.

    Args:
        bits: Array of 0/1 values whose last axis has even length.

    Returns:
        Complex symbol array.
    """
    bits = np.asarray(bits)
    if bits.ndim == 0 or bits.shape[-1] % BITS_PER_QAM4:
        raise DimensionError(f'bit count must be a multiple of {BITS_PER_QAM4}, got shape {bits.shape}')
    pairs = bits.reshape(*bits.shape[:-1], -1, BITS_PER_QAM4).astype(float)
    return ((1.0 - 2.0 * pairs[..., 0]) + 1j * (1.0 - 2.0 * pairs[..., 1])) * QAM_SCALE


def qam_slice(symbols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hard-decide symbols to the nearest 4-QAM point.

    Decisions use the signs of the real and imaginary parts only, so any
    positive scaling of the input gives the same output. An exact zero
    component goes to the positive half-plane.

    Args:
        symbols: Complex array (last axis = subcarriers).

    Returns:
        Tuple of (hard symbols, bits); bits have twice the last-axis length.
    """
    symbols = np.atleast_1d(np.asarray(symbols))
    b0 = (symbols.real < 0).astype(np.int8)
    b1 = (symbols.imag < 0).astype(np.int8)
    bits = np.stack([b0, b1], axis=-1).reshape(*symbols.shape[:-1], -1)
    return qam_map(bits), bits


def q_function(x: float | np.ndarray) -> float | np.ndarray:
    """Gaussian tail probability Q(x) = erfc(x/√2)/2."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def make_pilot(M: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a random block pilot of M Gray 4-QAM symbols."""
    return qam_map(rng.integers(0, 2, size=BITS_PER_QAM4 * M))


def doppler_spread(f_c: float, v_max_kmh: float) -> float:
    """Maximum Doppler shift f_c·v/c (Hz) for a speed in km/h."""
    if v_max_kmh < 0:
        raise ParameterError(f'speed must be non-negative, got {v_max_kmh} km/h')
    return f_c * kmh_to_ms(v_max_kmh) / SPEED_OF_LIGHT


def coherence_time(sigma_nu: float) -> float:
    """Approximate channel coherence time 1/σ_ν (s); infinite for a static channel."""
    return np.inf if sigma_nu == 0 else 1.0 / sigma_nu

"""Test channel realizations and frame synthesis."""

import numpy as np
import pytest

from components.channel import (
    draw_channel, generate_frame, generate_observation, noise_variance_for_snr, path_gain_at,
    single_path_channel, symbol_start_time, reference_scenario,
)
from components.errors import DimensionError, ParameterError
from components.signal_core import (
    OfdmConfig, delay_phasor, dft_matrix, doppler_phasor, doppler_spread, make_pilot, steering_vector,
)
from config import config


def small_config() -> OfdmConfig:
    return OfdmConfig(M=16, N=8, N_r=8)


def matrix_observation(x_n, n, channel, ofdm):
    """Observation built with explicit DFT and diagonal matrices."""
    F = dft_matrix(ofdm.M)
    Y = np.zeros((ofdm.M, ofdm.N_r), dtype=complex)
    for path in channel['paths']:
        C = np.diag(doppler_phasor(path['nu'], ofdm.M, ofdm.delta_tau))
        B = np.diag(delay_phasor(path['tau'], ofdm.M, ofdm.delta_f))
        column = np.sqrt(ofdm.P_T) * path_gain_at(path, n, ofdm) * (C @ F.conj().T @ B @ x_n)
        Y += np.outer(column, steering_vector(path['theta'], ofdm.N_r))
    return Y


def test_noise_variance_for_snr():
    """Test σ² = ‖α‖²P_T/snr and the non-positive SNR error."""
    alpha = np.array([1.0, 1j, 0.5])
    assert abs(noise_variance_for_snr(alpha, 2.0, 4.0) - 2.25 * 2.0 / 4.0) < 1e-12, 'noise variance wrong'
    with pytest.raises(ParameterError):
        noise_variance_for_snr(alpha, 1.0, 0.0)
    print('✓ Noise variance works')


def test_draw_channel_reference():
    """Test magnitudes, Doppler bounds and σ² of a reference draw."""
    ofdm = OfdmConfig()
    channel = draw_channel(ofdm, reference_scenario(300.0, 0.0), np.random.default_rng(5))
    paths = channel['paths']
    assert len(paths) == 4, 'reference scenario has four paths'
    powers = 10 ** (np.array([0.0, -1.0, -5.0, -7.0]) / 10)
    assert np.allclose([abs(p['alpha']) ** 2 for p in paths], powers), 'gain magnitudes must follow the powers'
    sigma_nu = doppler_spread(ofdm.f_c, 300.0)
    assert all(abs(p['nu']) <= sigma_nu + 1e-9 for p in paths), 'Doppler must lie within the spread'
    assert abs(channel['sigma2'] - powers.sum()) < 1e-12, 'at 0 dB the noise equals the total gain power'
    assert np.allclose([p['tau'] for p in paths], [0.0, 0.9e-6, 2.4e-6, 3.0e-6]), 'delays wrong'
    print('✓ Reference channel draw works')


def test_draw_channel_static_and_errors():
    """Test zero speed and the invalid-scenario errors."""
    ofdm = OfdmConfig()
    channel = draw_channel(ofdm, reference_scenario(0.0, 10.0), np.random.default_rng(6))
    assert all(p['nu'] == 0.0 for p in channel['paths']), 'static scenario must have zero Doppler'

    with pytest.raises(ParameterError):
        draw_channel(ofdm, reference_scenario(-10.0, 0.0), np.random.default_rng(0))
    long_delay = {**reference_scenario(100.0, 0.0), 'delays_us': [0.0, 0.9, 2.4, 6.0]}
    with pytest.raises(ParameterError):
        draw_channel(ofdm, long_delay, np.random.default_rng(0))
    ragged = {**reference_scenario(100.0, 0.0), 'powers_db': [0.0]}
    with pytest.raises(DimensionError):
        draw_channel(ofdm, ragged, np.random.default_rng(0))
    print('✓ Static channel and scenario errors work')


def test_draw_channel_is_seeded():
    """Test that the same generator seed gives the same realization."""
    ofdm = OfdmConfig()
    first = draw_channel(ofdm, reference_scenario(500.0, -4.0), np.random.default_rng(9))
    second = draw_channel(ofdm, reference_scenario(500.0, -4.0), np.random.default_rng(9))
    assert first == second, 'equal seeds must give equal channels'
    print('✓ Channel draws are reproducible')


def test_symbol_timing():
    """Test t_n and the slow-time gain rotation."""
    ofdm = OfdmConfig()
    assert abs(symbol_start_time(1, ofdm) - ofdm.T_cp) < 1e-18, 't_1 must equal T_cp'
    assert abs(symbol_start_time(3, ofdm) - symbol_start_time(2, ofdm) - ofdm.T_prime) < 1e-15, 'symbols are T prime apart'
    path = single_path_channel(0.0, 0.0, 1000.0, 2.0)['paths'][0]
    ratio = path_gain_at(path, 3, ofdm) / path_gain_at(path, 2, ofdm)
    assert abs(ratio - np.exp(2j * np.pi * 1000.0 * ofdm.T_prime)) < 1e-12, 'gain must rotate by ν·T prime'
    print('✓ Symbol timing works')


def test_observation_matches_matrix_form():
    """Test the elementwise synthesis against explicit matrices."""
    ofdm = OfdmConfig(M=64, N=8, N_r=8)
    rng = np.random.default_rng(10)
    channel = draw_channel(ofdm, reference_scenario(600.0, 5.0), rng)
    noiseless = {**channel, 'sigma2': 0.0}
    x_n = make_pilot(ofdm.M, rng)
    for n in [1, 4]:
        Y = generate_observation(x_n, n, noiseless, ofdm, rng)
        error = np.max(np.abs(Y - matrix_observation(x_n, n, noiseless, ofdm)))
        assert error < 1e-10, f'symbol {n}: elementwise and matrix forms differ by {error}'
    print('✓ Observation matches the matrix form')


def test_zero_paths_give_pure_noise():
    """Test an empty channel: observation variance equals σ²."""
    ofdm = small_config()
    channel = {'paths': [], 'sigma2': 2.0}
    rng = np.random.default_rng(11)
    samples = np.concatenate([generate_observation(np.ones(ofdm.M), 1, channel, ofdm, rng).ravel()
                              for _ in range(200)])
    assert abs(np.mean(np.abs(samples) ** 2) - 2.0) < 0.1, 'noise power must match sigma2'
    print('✓ Pure-noise observation works')


def test_observation_input_checks():
    """Test the symbol shape and index checks."""
    ofdm = small_config()
    channel = single_path_channel(0.0, 0.0, 0.0)
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        generate_observation(np.ones(ofdm.M + 1), 1, channel, ofdm, rng)
    with pytest.raises(ParameterError):
        generate_observation(np.ones(ofdm.M), 0, channel, ofdm, rng)
    print('✓ Observation input checks work')


def test_generate_frame_layout():
    """Test that the pilot comes first and data follows."""
    ofdm = small_config()
    rng = np.random.default_rng(12)
    pilot = make_pilot(ofdm.M, rng)
    bits = rng.integers(0, 2, size=(ofdm.N - 1, ofdm.bits_per_symbol))
    channel = single_path_channel(np.deg2rad(20.0), 1e-6, 300.0)
    frame, symbols = generate_frame(pilot, bits, channel, ofdm, rng)
    assert frame['Y'].shape == (ofdm.N, ofdm.M, ofdm.N_r), f"frame shape wrong: {frame['Y'].shape}"
    assert np.allclose(symbols[0], pilot), 'symbol 1 must be the pilot'
    assert symbols.shape == (ofdm.N, ofdm.M), 'one symbol row per OFDM symbol'
    assert frame['channel'] is channel and frame['config'] == ofdm, 'frame must carry its ground truth'
    print('✓ Frame layout works')


def test_generate_frame_checks():
    """Test frame-level shape and delay checks."""
    ofdm = small_config()
    rng = np.random.default_rng(0)
    pilot = make_pilot(ofdm.M, rng)
    bits = np.zeros((ofdm.N - 1, ofdm.bits_per_symbol), dtype=int)
    channel = single_path_channel(0.0, 0.0, 0.0)
    with pytest.raises(DimensionError):
        generate_frame(pilot[:-1], bits, channel, ofdm, rng)
    with pytest.raises(DimensionError):
        generate_frame(pilot, bits[:-1], channel, ofdm, rng)
    with pytest.raises(ParameterError):
        generate_frame(pilot, bits, single_path_channel(0.0, 2 * ofdm.T_cp, 0.0), ofdm, rng)
    print('✓ Frame checks work')


if __name__ == '__main__':
    config.debug_mode = False

    test_noise_variance_for_snr()
    test_draw_channel_reference()
    test_draw_channel_static_and_errors()
    test_draw_channel_is_seeded()
    test_symbol_timing()
    test_observation_matches_matrix_form()
    test_zero_paths_give_pure_noise()
    test_observation_input_checks()
    test_generate_frame_layout()
    test_generate_frame_checks()

    print('\n🎉 All channel tests passed!')

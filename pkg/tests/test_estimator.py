"""Test CFAR DoA detection and pilot-based delay and gain estimation."""

import numpy as np
import pytest

from components.channel import draw_channel, generate_observation, single_path_channel, reference_scenario
from components.errors import DetectionError, DimensionError, ParameterError
from components.estimator import (
    angle_grid, angle_mf, angular_spectrum, cfar_detect, cfar_scale, cfar_threshold, default_cfar,
    delay_grid, estimate_delay, estimate_gain, estimate_paths, merge_detections, refine_peak,
)
from components.signal_core import OfdmConfig, make_pilot, steering_vector
from config import config


def noiseless_pilot(channel, ofdm, pilot):
    quiet = {**channel, 'sigma2': 0.0}
    return generate_observation(pilot, 1, quiet, ofdm, np.random.default_rng(0))


def test_angle_grid():
    """Test the default half-degree DoA grid."""
    grid = angle_grid()
    assert len(grid) == 357, f'expected 357 grid angles, got {len(grid)}'
    assert np.isclose(grid[0], np.deg2rad(-89.0)) and np.isclose(grid[-1], np.deg2rad(89.0)), 'grid ends wrong'
    assert np.allclose(np.diff(np.rad2deg(grid)), 0.5), 'grid step must be 0.5 degree'
    with pytest.raises(ParameterError):
        angle_grid(0.0)
    print('✓ Angle grid works')


def test_delay_grid():
    """Test the delay grid covers the cyclic prefix with a tenth of Δτ."""
    ofdm = OfdmConfig()
    grid = delay_grid(ofdm)
    step = ofdm.delta_tau / 10
    assert grid[0] == 0.0, 'delay grid must start at zero'
    assert np.allclose(np.diff(grid), step), 'delay step must be a tenth of the resolution'
    assert grid[-1] <= ofdm.T_cp * (1 + 1e-9) and ofdm.T_cp - grid[-1] < step, 'grid must end at the CP'
    with pytest.raises(ParameterError):
        delay_grid(ofdm, 0.0)
    print('✓ Delay grid works')


def test_angular_spectrum_peaks_at_path():
    """Test the spectrum maximum sits at the true angle."""
    ofdm = OfdmConfig(M=32, N=8, N_r=16)
    pilot = make_pilot(ofdm.M, np.random.default_rng(1))
    Y_1 = noiseless_pilot(single_path_channel(np.deg2rad(-20.0), 0.0, 0.0), ofdm, pilot)
    grid = angle_grid()
    spectrum = angular_spectrum(Y_1, grid)
    assert np.all(spectrum >= 0), 'spectrum must be non-negative'
    assert abs(np.rad2deg(grid[np.argmax(spectrum)]) + 20.0) < 1e-9, 'peak must be at -20 degrees'
    with pytest.raises(DimensionError):
        angular_spectrum(Y_1[:, 0], grid)
    print('✓ Angular spectrum works')


def test_cfar_scale_single_look():
    """Test the single-look multiplier against the closed form."""
    for n in [4, 16, 32]:
        expected = n * (1e-3 ** (-1.0 / n) - 1.0)
        assert abs(cfar_scale(1e-3, n) - expected) < 1e-9 * expected, f'scale wrong for n={n}'
    assert cfar_scale(1e-3, 16, 8) < cfar_scale(1e-3, 16, 1), 'more looks must lower the multiplier'
    print('✓ CFAR scale works')


def test_cfar_false_alarm_calibration():
    """Test the false-alarm count on independent multi-look noise cells."""
    cfar = default_cfar()
    looks = 4
    spectrum = np.random.default_rng(2).gamma(looks, 1.0, 100_000)
    alarms = int(np.count_nonzero(spectrum > cfar_threshold(spectrum, cfar, looks)))
    assert 50 <= alarms <= 200, f'expected about 100 false alarms in 1e5 cells, got {alarms}'
    print('✓ CFAR calibration works')


def test_cfar_detect_peaks():
    """Test detection of two peaks on a flat floor and rejection of a weak one."""
    cfar = default_cfar()
    spectrum = np.ones(200)
    spectrum[50] = 100.0
    spectrum[140] = 60.0
    spectrum[100] = 1.5
    assert cfar_detect(spectrum, cfar) == [50, 140], f'wrong detections {cfar_detect(spectrum, cfar)}'
    print('✓ CFAR peak detection works')


def test_cfar_relative_floor():
    """Test that peaks far below the strongest one are dropped."""
    cfar = default_cfar()
    spectrum = np.full(200, 1e-6)
    spectrum[50] = 1000.0
    spectrum[140] = 1.0
    assert cfar_detect(spectrum, cfar) == [50], 'a peak 30 dB down must be dropped'
    print('✓ CFAR relative floor works')


def test_cfar_short_spectrum():
    """Test the error for a spectrum shorter than the CFAR window."""
    with pytest.raises(ParameterError):
        cfar_detect(np.ones(29), default_cfar())
    print('✓ Short spectrum is rejected')


def test_refine_peak():
    """Test parabolic refinement on an exact parabola and at the edges."""
    grid = np.arange(10.0)
    spectrum = 50.0 - (grid - 4.3) ** 2
    assert abs(refine_peak(spectrum, 4, grid) - 4.3) < 1e-12, 'vertex of a parabola must be exact'
    assert refine_peak(spectrum, 0, grid) == 0.0, 'edge cells are not refined'
    print('✓ Peak refinement works')


def test_merge_detections():
    """Test that a detection within one beamwidth of a stronger one is dropped."""
    thetas = [np.deg2rad(10.0), np.deg2rad(10.5), np.deg2rad(40.0)]
    kept = merge_detections(thetas, [5.0, 8.0, 1.0], 32)
    assert kept == [thetas[1], thetas[2]], f'unexpected merge result {np.rad2deg(kept)}'
    print('✓ Detection merging works')


def test_angle_mf_isolates_path():
    """Test that matched filtering a single path returns its branch."""
    ofdm = OfdmConfig(M=16, N=4, N_r=8)
    theta = np.deg2rad(25.0)
    Y_1 = noiseless_pilot(single_path_channel(theta, 0.0, 0.0, 0.5j), ofdm, make_pilot(ofdm.M, np.random.default_rng(3)))
    y = angle_mf(Y_1, theta)
    assert y.shape == (ofdm.M,), 'one branch expected'
    assert np.allclose(y, Y_1[:, 0]), 'first antenna sees the branch with unit phase'
    frame = np.stack([Y_1, 2 * Y_1])
    assert angle_mf(frame, np.array([theta, 0.0])).shape == (2, ofdm.M, 2), 'frame and angle axes expected'
    print('✓ Angle matched filter works')


def test_angle_mf_noise_variance():
    """Test that beamforming noise-only snapshots leaves σ²/N_r per element."""
    rng = np.random.default_rng(21)
    N_r = 32
    noise = (rng.standard_normal((10_000, N_r)) + 1j * rng.standard_normal((10_000, N_r))) / np.sqrt(2)
    y = angle_mf(noise, np.deg2rad(17.0))
    variance = np.mean(np.abs(y) ** 2)
    assert abs(variance * N_r - 1.0) < 0.05, f'output variance {variance:.5f}, expected {1 / N_r:.5f}'
    print('✓ Angle matched filter noise variance works')


def test_angle_mf_orthogonal_path_leaks_nothing():
    """Test that a path on an orthogonal steering vector does not leak."""
    x = make_pilot(16, np.random.default_rng(4))
    Y = np.outer(x, steering_vector(0.0, 2))
    assert np.max(np.abs(angle_mf(Y, np.pi / 2))) < 1e-12, 'sines one apart must be orthogonal for N_r=2'
    assert np.allclose(angle_mf(Y, 0.0), x), 'matched angle must return the branch'
    print('✓ Angle matched filter orthogonal leakage works')


def test_delay_and_gain_exact_on_grid():
    """Test exact recovery of an on-grid delay and the gain."""
    ofdm = OfdmConfig(M=64, N=8, N_r=8)
    grid = delay_grid(ofdm)
    tau, alpha = grid[37], 0.8 * np.exp(0.4j)
    pilot = make_pilot(ofdm.M, np.random.default_rng(4))
    Y_1 = noiseless_pilot(single_path_channel(np.deg2rad(15.0), tau, 0.0, alpha), ofdm, pilot)
    y = angle_mf(Y_1, np.deg2rad(15.0))
    tau_hat = estimate_delay(y, pilot, grid, ofdm)
    assert tau_hat == tau, f'delay {tau_hat} should equal {tau}'
    assert abs(estimate_gain(y, pilot, tau_hat, ofdm) - alpha) < 1e-12, 'LS gain must be exact'
    print('✓ Delay and gain estimation work')


def test_estimate_paths_reference_scenario():
    """Test the four reference paths are found with accurate parameters."""
    ofdm = OfdmConfig()
    rng = np.random.default_rng(5)
    channel = draw_channel(ofdm, reference_scenario(0.0, 10.0), rng)
    pilot = make_pilot(ofdm.M, rng)
    estimates = estimate_paths(noiseless_pilot(channel, ofdm, pilot), pilot, ofdm, default_cfar())
    assert len(estimates) == 4, f'expected 4 paths, got {len(estimates)}'

    step = ofdm.delta_tau / 10
    for path in channel['paths']:
        match = min(estimates, key=lambda e: abs(e['theta_hat'] - path['theta']))
        assert abs(np.rad2deg(match['theta_hat'] - path['theta'])) < 0.25, 'angle off by more than 0.25 degree'
        assert abs(match['tau_hat'] - path['tau']) <= step, 'delay off by more than one grid step'
        # off-grid delays rotate the LS gain by up to πΔf(M-1)·step/2
        assert abs(abs(match['alpha_hat']) - abs(path['alpha'])) < 0.05 * abs(path['alpha']), 'gain magnitude off'
        assert abs(np.angle(match['alpha_hat'] / path['alpha'])) < 0.2, 'gain phase off by more than 0.2 rad'
        assert match['nu_hat'] == 0.0, 'Doppler starts at zero'
        assert match['gain_track'][0] == match['alpha_hat'], 'gain track starts with the pilot gain'
    print('✓ Reference path estimation works')


def test_estimate_paths_strongest_first():
    """Test that estimates come back in order of spectrum power."""
    ofdm = OfdmConfig()
    weak = single_path_channel(np.deg2rad(40.0), 0.0, 0.0, 0.5)['paths'][0]
    strong = single_path_channel(np.deg2rad(-20.0), 1e-6, 0.0, 1.0)['paths'][0]
    channel = {'paths': [weak, strong], 'sigma2': 0.0}
    pilot = make_pilot(ofdm.M, np.random.default_rng(6))
    estimates = estimate_paths(noiseless_pilot(channel, ofdm, pilot), pilot, ofdm, default_cfar())
    angles = [np.rad2deg(e['theta_hat']) for e in estimates]
    assert len(angles) == 2, f'expected two paths, got {angles}'
    assert abs(angles[0] + 20.0) < 0.25 and abs(angles[1] - 40.0) < 0.25, f'strongest path must come first: {angles}'
    print('✓ Estimates are ordered strongest first')


def test_estimate_paths_errors():
    """Test the shape error and the no-detection error."""
    ofdm = OfdmConfig(M=16, N=4, N_r=8)
    pilot = make_pilot(ofdm.M, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        estimate_paths(np.zeros((ofdm.M, ofdm.N_r + 1)), pilot, ofdm, default_cfar())
    with pytest.raises(DetectionError):
        estimate_paths(np.zeros((ofdm.M, ofdm.N_r), dtype=complex), pilot, ofdm, default_cfar())
    print('✓ Path estimation errors work')


if __name__ == '__main__':
    config.debug_mode = False

    test_angle_grid()
    test_delay_grid()
    test_angular_spectrum_peaks_at_path()
    test_cfar_scale_single_look()
    test_cfar_false_alarm_calibration()
    test_cfar_detect_peaks()
    test_cfar_relative_floor()
    test_cfar_short_spectrum()
    test_refine_peak()
    test_merge_detections()
    test_angle_mf_isolates_path()
    test_angle_mf_noise_variance()
    test_angle_mf_orthogonal_path_leaks_nothing()
    test_delay_and_gain_exact_on_grid()
    test_estimate_paths_reference_scenario()
    test_estimate_paths_strongest_first()
    test_estimate_paths_errors()

    print('\n🎉 All estimator tests passed!')

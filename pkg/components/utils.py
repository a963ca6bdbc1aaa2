"""Common utility functions shared by the simulator, receiver and harness."""

import numpy as np


def db_to_linear(value_db: float | np.ndarray) -> float | np.ndarray:
    """Convert a power ratio from decibels to linear scale.

    Args:
        value_db: Power ratio in dB.

    Returns:
        Linear power ratio.
    """
    if np.ndim(value_db):
        return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float | np.ndarray) -> float | np.ndarray:
    """Convert a linear power ratio to decibels.

    Args:
        value: Linear power ratio (must be positive).

    Returns:
        Power ratio in dB.
    """
    return 10.0 * np.log10(value)


def kmh_to_ms(speed_kmh: float) -> float:
    """Convert a speed from km/h to m/s.

    Args:
        speed_kmh: Speed in kilometres per hour.

    Returns:
        Speed in metres per second.
    """
    return speed_kmh / 3.6


def trial_rng(seed: int, point_index: int, trial_index: int) -> np.random.Generator:
    """Build the independent generator of one Monte Carlo trial.

    Args:
        seed: Experiment seed.
        point_index: Index of the sweep point.
        trial_index: Index of the trial within the sweep point.

    Returns:
        Generator whose stream depends only on the three integers.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, point_index, trial_index]))


def stack_complex(z: np.ndarray) -> np.ndarray:
    """Stack a complex vector (or a batch of them) as [real; imag] reals."""
    return np.concatenate([z.real, z.imag], axis=-1)

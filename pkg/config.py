"""Configuration system with property-based validation.

``Config`` holds process-wide runtime settings (diagnostics, threads) and is
exported as the ``config`` singleton. ``ExperimentConfig`` holds the settings
of one experiment run; unlike runtime settings they are never clamped, an
invalid value raises ``ConfigError`` so results stay reproducible.
"""

import json
import os
import re
from dataclasses import asdict
from pathlib import Path
from typing import Any

from components.errors import ConfigError, ParameterError
from components.signal_core import OfdmConfig

THREADS_ENV = 'DOA_OFDM_THREADS'

EXPERIMENT_KINDS = ('ber_vs_snr', 'ber_vs_speed', 'rmse_vs_snr', 'ber_vs_doppler', 'train_fnn', 'accounting')
INIT_METHODS = ('zd', 'evm', 'dl', 'perfect_csi')

DEFAULT_CFAR = {
    'grid_step_deg': 0.5,
    'training_cells': 8,
    'guard_cells': 6,
    'pfa': 1e-3,
    'min_rel_power_db': -15.0,
}

DEFAULT_TRAINING = {
    'samples': 50_000,
    'validation_fraction': 0.2,
    'tau_max_us': 5.0,
    'nu_max_hz': 5e3,
    'snr_min_db': 12.0,
    'snr_max_db': 18.0,
    'batch_size': 256,
    'learning_rate': 1e-3,
    'epochs': 30,
    'seed': 0,
}

DEFAULT_EVM_GRID = {'max_hz': 5e3, 'step_hz': 50.0}

DEFAULT_PATHS = {
    'angles_deg': [10.0, 50.0, -30.0, 20.0],
    'delays_us': [0.0, 0.9, 2.4, 3.0],
    'powers_db': [0.0, -1.0, -5.0, -7.0],
}

DEFAULT_SINGLE_PATH = {'theta_deg': 10.0, 'delay_us': 0.9, 'snr_db': 10.0}

INTEGER_KEYS = {'M', 'N', 'N_r', 'mod_order', 'training_cells', 'guard_cells', 'samples', 'batch_size',
                'epochs', 'seed'}


def _threads_from_env() -> int:
    try:
        return int(os.environ.get(THREADS_ENV, '1'))
    except ValueError:
        return 1


class Config:
    """Runtime settings with automatic validation and value clamping."""

    def __init__(self) -> None:
        """Initialize configuration with default values."""
        self.debug_mode: bool = False
        self.verbose: bool = False
        self._num_threads: int = 1
        self.num_threads = _threads_from_env()

    @property
    def num_threads(self) -> int:
        """Get the number of worker threads for Monte Carlo trials."""
        return self._num_threads

    @num_threads.setter
    def num_threads(self, value: int) -> None:
        """Set thread count with minimum validation."""
        if value < 1:
            if self.debug_mode:
                print(f'[CONFIG] Thread count {value} clamped to minimum 1')
            self._num_threads = 1
        else:
            self._num_threads = value


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _merge_section(name: str, current: dict, value: Any) -> dict:
    """Overlay a partial section onto its current values, checking keys and number types."""
    if not isinstance(value, dict):
        raise ConfigError(f'{name} must be an object, got {value!r}')
    unknown = sorted(set(value) - set(current))
    if unknown:
        raise ConfigError(f'unknown key {unknown[0]!r} in {name}')
    merged = dict(current)
    for key, item in value.items():
        if key in INTEGER_KEYS:
            if not isinstance(item, int) or isinstance(item, bool):
                raise ConfigError(f'{name}.{key} must be an integer, got {item!r}')
            merged[key] = item
        elif isinstance(current[key], list):
            if not isinstance(item, list) or not all(_is_number(v) for v in item):
                raise ConfigError(f'{name}.{key} must be a list of numbers, got {item!r}')
            merged[key] = [float(v) for v in item]
        else:
            if not _is_number(item):
                raise ConfigError(f'{name}.{key} must be a number, got {item!r}')
            merged[key] = float(item)
    return merged


class ExperimentConfig:
    """Validated settings of one experiment run."""

    FIELDS = ('kind', 'sweep', 'v_max_kmh', 'snr_db', 'trials', 'init_method', 'seed', 'pilot_seed', 'ofdm',
              'paths', 'cfar', 'delay_grid_fraction', 'evm_grid', 'window_length', 'mf_normalized_bound',
              'training', 'model_path', 'output_path', 'coherence_time_s', 'frame_time_s', 'single_path')

    def __init__(self) -> None:
        """Initialize with the reference four-path, 300 km/h setup."""
        self._kind: str = 'ber_vs_snr'
        self._sweep: list[float] | None = None
        self._v_max_kmh: float = 300.0
        self._snr_db: float = -4.0
        self._trials: int = 500
        self._init_method: str = 'zd'
        self._seed: int = 0
        self._pilot_seed: int = 0
        self._ofdm: dict = asdict(OfdmConfig.reference())
        self._paths: dict = {key: list(values) for key, values in DEFAULT_PATHS.items()}
        self._cfar: dict = dict(DEFAULT_CFAR)
        self._delay_grid_fraction: float = 0.1
        self._evm_grid: dict = dict(DEFAULT_EVM_GRID)
        self._window_length: int | None = None
        self._mf_normalized_bound: bool = False
        self._training: dict = dict(DEFAULT_TRAINING)
        self._model_path: str = 'fnn_doppler.bin'
        self._output_path: str = 'results.csv'
        self._coherence_time_s: float = 10e-3
        self._frame_time_s: float = 1e-3
        self._single_path: dict = dict(DEFAULT_SINGLE_PATH)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ExperimentConfig) and self.to_dict() == other.to_dict()

    @property
    def kind(self) -> str:
        """Get the experiment kind."""
        return self._kind

    @kind.setter
    def kind(self, value: str) -> None:
        if value not in EXPERIMENT_KINDS:
            raise ConfigError(f'kind must be one of {EXPERIMENT_KINDS}, got {value!r}')
        self._kind = value

    @property
    def sweep(self) -> list[float] | None:
        """Get the sweep grid (None selects the default grid of the experiment)."""
        return self._sweep

    @sweep.setter
    def sweep(self, value: list[float] | None) -> None:
        if value is not None:
            if not isinstance(value, list) or not value or not all(_is_number(v) for v in value):
                raise ConfigError(f'sweep must be a non-empty list of numbers, got {value!r}')
            value = [float(v) for v in value]
        self._sweep = value

    @property
    def v_max_kmh(self) -> float:
        """Get the maximum UE speed in km/h."""
        return self._v_max_kmh

    @v_max_kmh.setter
    def v_max_kmh(self, value: float) -> None:
        if not _is_number(value) or value < 0:
            raise ConfigError(f'v_max_kmh must be a non-negative number, got {value!r}')
        self._v_max_kmh = float(value)

    @property
    def snr_db(self) -> float:
        """Get the fixed SNR in dB."""
        return self._snr_db

    @snr_db.setter
    def snr_db(self, value: float) -> None:
        if not _is_number(value):
            raise ConfigError(f'snr_db must be a number, got {value!r}')
        self._snr_db = float(value)

    @property
    def trials(self) -> int:
        """Get the number of frames per sweep point."""
        return self._trials

    @trials.setter
    def trials(self, value: int) -> None:
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f'trials must be an integer >= 1, got {value!r}')
        self._trials = value

    @property
    def init_method(self) -> str:
        """Get the Doppler initialization method."""
        return self._init_method

    @init_method.setter
    def init_method(self, value: str) -> None:
        if value not in INIT_METHODS:
            raise ConfigError(f'init_method must be one of {INIT_METHODS}, got {value!r}')
        self._init_method = value

    @property
    def seed(self) -> int:
        """Get the Monte Carlo seed."""
        return self._seed

    @seed.setter
    def seed(self, value: int) -> None:
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ConfigError(f'seed must be a non-negative integer, got {value!r}')
        self._seed = value

    @property
    def pilot_seed(self) -> int:
        """Get the seed of the system pilot shared by the receiver and the regressor."""
        return self._pilot_seed

    @pilot_seed.setter
    def pilot_seed(self, value: int) -> None:
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ConfigError(f'pilot_seed must be a non-negative integer, got {value!r}')
        self._pilot_seed = value

    @property
    def ofdm(self) -> dict:
        """Get the link parameters."""
        return dict(self._ofdm)

    @ofdm.setter
    def ofdm(self, value: dict) -> None:
        merged = _merge_section('ofdm', self._ofdm, value)
        try:
            OfdmConfig.reference().with_overrides(**merged)
        except ParameterError as exc:
            raise ConfigError(f'ofdm: {exc}') from exc
        self._ofdm = merged

    @property
    def paths(self) -> dict:
        """Get the multipath geometry (angles, delays, powers)."""
        return {key: list(values) for key, values in self._paths.items()}

    @paths.setter
    def paths(self, value: dict) -> None:
        merged = _merge_section('paths', self._paths, value)
        lengths = {len(values) for values in merged.values()}
        if len(lengths) != 1 or 0 in lengths:
            raise ConfigError('paths lists must be non-empty and of equal length')
        if any(d < 0 for d in merged['delays_us']):
            raise ConfigError('path delays must be non-negative')
        self._paths = merged

    @property
    def cfar(self) -> dict:
        """Get the CFAR detector settings."""
        return dict(self._cfar)

    @cfar.setter
    def cfar(self, value: dict) -> None:
        merged = _merge_section('cfar', self._cfar, value)
        if not merged['grid_step_deg'] > 0:
            raise ConfigError(f"cfar.grid_step_deg must be positive, got {merged['grid_step_deg']}")
        if merged['training_cells'] < 1 or merged['guard_cells'] < 0:
            raise ConfigError('cfar needs training_cells >= 1 and guard_cells >= 0')
        if not 0.0 < merged['pfa'] < 1.0:
            raise ConfigError(f"cfar.pfa must lie in (0, 1), got {merged['pfa']}")
        if merged['min_rel_power_db'] > 0:
            raise ConfigError(f"cfar.min_rel_power_db must be <= 0, got {merged['min_rel_power_db']}")
        self._cfar = merged

    @property
    def delay_grid_fraction(self) -> float:
        """Get the delay grid step as a fraction of the delay resolution."""
        return self._delay_grid_fraction

    @delay_grid_fraction.setter
    def delay_grid_fraction(self, value: float) -> None:
        if not _is_number(value) or not 0.0 < value <= 1.0:
            raise ConfigError(f'delay_grid_fraction must lie in (0, 1], got {value!r}')
        self._delay_grid_fraction = float(value)

    @property
    def evm_grid(self) -> dict:
        """Get the EVM Doppler search grid."""
        return dict(self._evm_grid)

    @evm_grid.setter
    def evm_grid(self, value: dict) -> None:
        merged = _merge_section('evm_grid', self._evm_grid, value)
        if not merged['step_hz'] > 0 or merged['max_hz'] < 0:
            raise ConfigError('evm_grid needs step_hz > 0 and max_hz >= 0')
        self._evm_grid = merged

    @property
    def window_length(self) -> int | None:
        """Get the fixed window length K (None derives it from the speed)."""
        return self._window_length

    @window_length.setter
    def window_length(self, value: int | None) -> None:
        if value is not None and (not isinstance(value, int) or isinstance(value, bool) or value < 2):
            raise ConfigError(f'window_length must be null or an integer >= 2, got {value!r}')
        self._window_length = value

    @property
    def mf_normalized_bound(self) -> bool:
        """Get whether the bound uses the beamformer-normalized noise and IPI."""
        return self._mf_normalized_bound

    @mf_normalized_bound.setter
    def mf_normalized_bound(self, value: bool) -> None:
        if not isinstance(value, bool):
            raise ConfigError(f'mf_normalized_bound must be true or false, got {value!r}')
        self._mf_normalized_bound = value

    @property
    def training(self) -> dict:
        """Get the regressor training recipe."""
        return dict(self._training)

    @training.setter
    def training(self, value: dict) -> None:
        merged = _merge_section('training', self._training, value)
        if merged['samples'] < 2 or merged['batch_size'] < 1 or merged['epochs'] < 1 or merged['seed'] < 0:
            raise ConfigError('training needs samples >= 2, batch_size >= 1, epochs >= 1 and seed >= 0')
        if not 0.0 < merged['validation_fraction'] < 1.0:
            raise ConfigError(f"training.validation_fraction must lie in (0, 1), got {merged['validation_fraction']}")
        if merged['snr_min_db'] > merged['snr_max_db'] or not merged['nu_max_hz'] > 0:
            raise ConfigError('training needs snr_min_db <= snr_max_db and nu_max_hz > 0')
        if merged['tau_max_us'] < 0 or not merged['learning_rate'] > 0:
            raise ConfigError('training needs tau_max_us >= 0 and learning_rate > 0')
        self._training = merged

    @property
    def model_path(self) -> str:
        """Get the regressor model file path."""
        return self._model_path

    @model_path.setter
    def model_path(self, value: str) -> None:
        if not isinstance(value, str) or not value:
            raise ConfigError(f'model_path must be a non-empty string, got {value!r}')
        self._model_path = value

    @property
    def output_path(self) -> str:
        """Get the result CSV path."""
        return self._output_path

    @output_path.setter
    def output_path(self, value: str) -> None:
        if not isinstance(value, str) or not value:
            raise ConfigError(f'output_path must be a non-empty string, got {value!r}')
        self._output_path = value

    @property
    def coherence_time_s(self) -> float:
        """Get the geometric coherence time used for overhead accounting."""
        return self._coherence_time_s

    @coherence_time_s.setter
    def coherence_time_s(self, value: float) -> None:
        if not _is_number(value) or not value > 0:
            raise ConfigError(f'coherence_time_s must be positive, got {value!r}')
        self._coherence_time_s = float(value)

    @property
    def frame_time_s(self) -> float:
        """Get the short-frame duration used for overhead accounting."""
        return self._frame_time_s

    @frame_time_s.setter
    def frame_time_s(self, value: float) -> None:
        if not _is_number(value) or not value > 0:
            raise ConfigError(f'frame_time_s must be positive, got {value!r}')
        self._frame_time_s = float(value)

    @property
    def single_path(self) -> dict:
        """Get the geometry of the single-path Doppler sweep."""
        return dict(self._single_path)

    @single_path.setter
    def single_path(self, value: dict) -> None:
        merged = _merge_section('single_path', self._single_path, value)
        if merged['delay_us'] < 0:
            raise ConfigError('single_path.delay_us must be non-negative')
        self._single_path = merged

    def ofdm_config(self) -> OfdmConfig:
        """Build the validated link configuration."""
        return OfdmConfig.reference().with_overrides(**self._ofdm)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}

    def update(self, values: dict, source_text: str | None = None) -> None:
        """Apply a mapping of field values, reporting the source line of a bad key.

        Args:
            values: Field name to value.
            source_text: Text the mapping was parsed from, for line numbers.
        """
        for key, value in values.items():
            if key not in self.FIELDS:
                raise ConfigError(f'unknown key {key!r}', _key_line(source_text, key))
            try:
                setattr(self, key, value)
            except ConfigError as exc:
                nested = re.search(r"unknown key '([^']+)'", str(exc))
                line = _key_line(source_text, nested.group(1) if nested else key)
                raise ConfigError(str(exc), line) from exc


def _key_line(text: str | None, key: str) -> int | None:
    """1-based line of the first occurrence of a JSON key."""
    if not text:
        return None
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count('\n', 0, match.start()) + 1 if match else None


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment configuration from a JSON object file.

    An empty file gives the reference defaults.

    Args:
        path: Configuration file path.

    Returns:
        Validated experiment configuration.

    Raises:
        ConfigError: On malformed JSON, unknown keys or invalid values.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f'cannot read {path}: {exc.strerror}') from exc

    cfg = ExperimentConfig()
    if not text.strip():
        return cfg
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f'{path}: column {exc.colno}: {exc.msg}', exc.lineno) from exc
    if not isinstance(values, dict):
        raise ConfigError(f'{path}: top level must be a JSON object', 1)
    cfg.update(values, text)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    """Normalized JSON text of every field (sorted keys)."""
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + '\n'


config = Config()

"""DoA-aided OFDM receiver experiments - command-line entry point."""

import argparse
import sys

from components import harness
from components.errors import ReceiverError
from config import ExperimentConfig, config, parse_config

COMMANDS = {
    'ber-snr': 'ber_vs_snr',
    'ber-speed': 'ber_vs_speed',
    'rmse-snr': 'rmse_vs_snr',
    'zd-limit': 'ber_vs_doppler',
    'train-fnn': 'train_fnn',
    'accounting': 'accounting',
}


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per experiment.

    Returns:
        Configured parser.
    """
    parser = argparse.ArgumentParser(prog='doa-ofdm', description='DoA-aided SIMO-OFDM receiver experiments')
    subparsers = parser.add_subparsers(dest='command', required=True)
    helps = {
        'ber-snr': 'BER against SNR at a fixed maximum speed',
        'ber-speed': 'BER against maximum speed at a fixed SNR',
        'rmse-snr': 'weighted Doppler RMSE against SNR with the MCRLB',
        'zd-limit': 'single-path BER across the zero-Doppler initialization limit',
        'train-fnn': 'train and evaluate the Doppler regressor',
        'accounting': 'pilot overhead, complexity and decoding latency',
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument('--config', help='JSON experiment configuration')
        sub.add_argument('--seed', type=int, help='Monte Carlo seed')
        sub.add_argument('--out', help='output CSV path')
        sub.add_argument('--model', help='regressor model path')
        sub.add_argument('--trials', type=int, help='frames per sweep point')
        sub.add_argument('--init', choices=['zd', 'evm', 'dl', 'perfect_csi'], help='Doppler initialization')
        sub.add_argument('--verbose', action='store_true', help='write per-frame diagnostics')
        sub.add_argument('--debug', action='store_true', help='print diagnostic messages')
    return parser


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Read the configuration file (if any) and apply command-line overrides."""
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    cfg.kind = COMMANDS[args.command]
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_path = args.out
    if args.model is not None:
        cfg.model_path = args.model
    if args.trials is not None:
        cfg.trials = args.trials
    if args.init is not None:
        cfg.init_method = args.init
    if args.command == 'zd-limit':
        cfg.init_method = 'zd'
    return cfg


def print_sweep(result: harness.SweepResult) -> None:
    """Print a sweep summary table."""
    print(f"{result['kind']} ({result['init_method']})")
    print(f"{'value':>10} {'ber':>11} {'awgn_ref':>11} {'rmse_hz':>10} {'mcrlb_hz':>10} {'failures':>8}")
    for point in result['points']:
        print(f"{point['sweep_value']:>10g} {point['ber']:>11.3e} {point['ber_awgn_ref']:>11.3e} "
              f"{point['rmse_hz']:>10.2f} {point['mcrlb_hz']:>10.2f} {point['frame_failures']:>8d}")


def run_command(cfg: ExperimentConfig) -> None:
    """Run the experiment selected by ``cfg.kind`` and write its outputs."""
    if cfg.kind == 'accounting':
        print(harness.format_accounting(harness.accounting(cfg)))
        return

    if cfg.kind == 'train_fnn':
        report = harness.run_train_fnn(cfg)
        print(f"model written to {report['model_path']}")
        print(f"best validation MSE {report['best_val_mse']:.3e}")
        print(f"held-out pearson {report['pearson']:.4f}, normalized RMSE {report['nrmse']:.4f}")
        print(f'predictions written to {cfg.output_path}')
        return

    model = harness.load_regressor(cfg)
    result = harness.EXPERIMENTS[cfg.kind](cfg, model)
    harness.write_sweep_csv(result, cfg.output_path)
    if config.verbose:
        harness.write_frame_csv(result, harness.frames_csv_path(cfg.output_path))
    print_sweep(result)
    print(f'results written to {cfg.output_path}')


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the experiment and map library errors to exit status 1.

    Args:
        argv: Arguments without the program name (defaults to sys.argv).

    Returns:
        Process exit status.
    """
    args = build_parser().parse_args(argv)
    config.debug_mode = args.debug
    config.verbose = args.verbose

    try:
        cfg = load_experiment(args)
        if config.debug_mode:
            print(f'[MAIN] {args.command}: {cfg.trials} trials, init {cfg.init_method}, '
                  f'seed {cfg.seed}, {config.num_threads} threads')
        run_command(cfg)
    except (ReceiverError, OSError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return 1

    if config.debug_mode:
        print('[MAIN] Done')
    return 0


if __name__ == '__main__':
    sys.exit(main())

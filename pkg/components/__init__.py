"""Receiver library components.

Submodules are imported explicitly (``from components import receiver``);
the package itself stays import-free so ``config`` can depend on it.
"""

__all__ = ['signal_core', 'channel', 'estimator', 'receiver', 'doppler_init', 'fnn', 'bounds', 'harness',
           'errors', 'utils']

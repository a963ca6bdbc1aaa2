"""Shared pytest setup: import from the repository root and keep diagnostics quiet."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from config import config  # noqa: E402

config.debug_mode = False
config.num_threads = 1

"""
Configuration for the singular flux lab.
Values come from the environment (or a .env file) with built-in defaults.
"""

import os
from dotenv import load_dotenv

load_dotenv()

# Output
DEFAULT_OUT_DIR = "out"
SFL_LOG_LEVEL = os.getenv("SFL_LOG_LEVEL", "INFO").upper()
WRITE_PLOT_DATA = os.getenv("SFL_WRITE_PLOT_DATA", "true").lower() == "true"

# Numerical defaults
DEFAULT_GRID_N = int(os.getenv("SFL_DEFAULT_GRID_N", "1024"))
LADDER_DEPTH = int(os.getenv("SFL_LADDER_DEPTH", "8"))
ZERO_KAPPA = float(os.getenv("SFL_ZERO_KAPPA", "1.0"))
SCAN_SAMPLES = int(os.getenv("SFL_SCAN_SAMPLES", "64"))


def resolve_out_dir(cli_out=None) -> str:
    """
    Pick the output directory for a scenario run.

    SFL_OUT wins over --out, which wins over the built-in default.
    """
    env_out = os.getenv("SFL_OUT")
    if env_out:
        return env_out
    return cli_out or DEFAULT_OUT_DIR

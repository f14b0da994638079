"""Shared launcher: run one CLI command with a bundled config."""

import sys
from pathlib import Path

from safesocp.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(command: str, config: str) -> None:
    sys.exit(main([command, "--config", str(CONFIGS / config), *sys.argv[1:]]))

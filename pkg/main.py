"""
Q_Bridge - Main Application
Time-symmetric Q-function path sampling from the command line
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli.commands import run


def main() -> int:
    """Application entry point"""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

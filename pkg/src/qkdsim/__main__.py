"""Allow `python -m qkdsim` as an alias for the `qkdsim` console script."""

import sys

from qkdsim.cli import main

if __name__ == "__main__":
    sys.exit(main())

"""Run the command line interface with ``python -m flexfeed``."""

import sys

from flexfeed.cli import main

if __name__ == "__main__":
    sys.exit(main())

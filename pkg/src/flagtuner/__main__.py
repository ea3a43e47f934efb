"""Module entry point: ``python -m flagtuner ...``."""

import sys

from .cli import main

sys.exit(main(sys.argv[1:]))

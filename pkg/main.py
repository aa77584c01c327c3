#!/usr/bin/env python3
"""
film-growth - root entry point

    python main.py simulate --config configs/simulate.yaml
"""

import logging
import sys

try:
    from dotenv import load_dotenv

    load_dotenv()
except ImportError as _e:
    logging.debug("dotenv not loaded (module missing): %s", _e)

from src.film_growth.cli.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())

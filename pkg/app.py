"""
Dynkin Game Toolkit - command-line entry point
"""

import sys

from dynkin_games.cli import main

if __name__ == '__main__':
    sys.exit(main())

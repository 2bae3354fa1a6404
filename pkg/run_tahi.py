#!/usr/bin/env python3
"""
TAHI toolkit - command-line entry point

Synthesizes pre-event SAR rasters for annotated oil-spill scenes, builds
bi-temporal change-detection datasets and evaluates restoration and
change-detection quality. Run with --help for the subcommands.
"""

from src.cli import main

if __name__ == "__main__":
    main()

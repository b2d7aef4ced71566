"""Run the command-line interface via `python -m hiermon`."""

from hiermon.cli import entrypoint

entrypoint()

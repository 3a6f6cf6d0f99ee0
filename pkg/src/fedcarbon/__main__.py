"""Allow `python -m fedcarbon` as an alias for the fedcarbon script."""

from .cli import entrypoint

entrypoint()

"""Per-user credential-stuffing detection toolkit."""

__version__ = "0.1.0"

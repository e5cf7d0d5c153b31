"""Laboratory for oblivious (query-commit) matching algorithms."""

__version__ = "0.1.0"

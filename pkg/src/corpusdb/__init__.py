"""Populate and query embedded databases built from bibliographic metadata dumps."""

__version__ = "0.1.0"

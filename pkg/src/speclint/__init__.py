"""speclint: find conflicting descriptions between specification text segments."""

__version__ = "0.1.0"

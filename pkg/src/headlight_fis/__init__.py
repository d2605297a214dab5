"""Fuzzy headlight-intensity control: Mamdani engine, glare photometry and encounter simulation."""

from pathlib import Path

__version__ = "0.1.0"


def data_path(*parts: str) -> Path:
    """Path to a file shipped in the package's ``data`` directory."""
    return Path(__file__).with_name("data").joinpath(*parts)

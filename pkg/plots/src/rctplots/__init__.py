"""Publication-style figures rendered from rctsynth's emitted CSV files."""

__version__ = "0.1.0"

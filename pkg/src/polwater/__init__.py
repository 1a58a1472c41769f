"""Water hazard detection from a horizontally/vertically polarized stereo pair."""

__version__ = "0.1.0"

"""Quality-aware image/prompt alignment at desk scale."""

__version__ = "0.1.0"

"""cardiosynth: labeled cardiac-MR-like volume synthesis and segmentation study tools."""

__version__ = "0.1.0"

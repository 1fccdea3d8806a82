"""Boundary-targeted pseudo-fake augmentation for audio deepfake detection."""

__version__ = "0.1.0"

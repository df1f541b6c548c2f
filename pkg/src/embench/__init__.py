"""Embedding task toolkit: reformulation, augmentation, evaluation, adapter training."""

__version__ = "0.1.0"

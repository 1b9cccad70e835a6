"""Generative multi-label text classification: generate label descriptions, then match them to labels."""

__version__ = "0.1.0"

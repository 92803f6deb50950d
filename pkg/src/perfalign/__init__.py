"""Symbolic core for joint score alignment, score-informed transcription and
mistake detection on piano performances."""

__version__ = "0.1.0"

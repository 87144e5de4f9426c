"""Sequence-to-sequence Mandarin ASR with interchangeable modeling units."""

__version__ = "0.1.0"

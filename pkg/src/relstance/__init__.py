"""Relational embeddings from social interaction pairs for stance detection."""

__version__ = "0.1.0"

"""Effective-bandwidth toolkit for priority buffers with autonomous batch service."""
__version__ = "0.1.0"

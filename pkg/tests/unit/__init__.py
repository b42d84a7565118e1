"""Unit tests for gfdrift."""

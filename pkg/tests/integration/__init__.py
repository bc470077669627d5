"""Integration tests package for slidset."""

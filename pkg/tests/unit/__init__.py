"""Unit tests package for slidset."""

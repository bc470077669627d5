"""Tests package for slidset."""

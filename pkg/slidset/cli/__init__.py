"""Command-line surface: problem file parser and entry point."""

"""Bundled sample files in classical benchmark layouts."""

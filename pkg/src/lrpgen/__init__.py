"""Depot generation and multi-depot route planning for location-routing problems."""

__version__ = "0.1.0"

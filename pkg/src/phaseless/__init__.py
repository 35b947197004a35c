"""Intensity-only array imaging."""

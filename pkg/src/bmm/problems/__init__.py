"""Encoders for the five benchmark problems and the appendix checks."""

"""Temporal transaction graph storage and sequence featurization."""

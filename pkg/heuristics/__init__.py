"""Neighbourhood similarity baselines."""

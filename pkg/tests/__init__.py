"""Test package for the temporal link-prediction engine."""

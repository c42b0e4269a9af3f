"""Configuration settings for the temporal link-prediction engine."""

"""Toy graphs, the session synthetic dataset and small run configs."""

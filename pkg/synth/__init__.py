"""Synthetic transaction graphs with a planted link signal."""

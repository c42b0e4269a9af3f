"""Enclosing subgraphs, structural labels and WL orderings."""

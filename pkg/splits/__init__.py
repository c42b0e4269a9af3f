"""Train/validation/test sample construction."""

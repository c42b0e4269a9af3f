"""Dense float64 tensors with reverse-mode differentiation."""

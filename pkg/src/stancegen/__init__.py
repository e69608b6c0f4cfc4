"""Stance detection on unseen targets with conditional encoding, attention,
and adversarial domain training on a small reverse-mode autodiff engine."""

from .tensor import Tape, Tensor, finite_difference_check

__all__ = ["Tape", "Tensor", "finite_difference_check"]

__version__ = "0.1.0"

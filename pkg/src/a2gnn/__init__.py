"""Multi-relation graph forecaster with learned adjacency and channel attention."""

from .autodiff import Tape, Tensor, backward, grad_check

__all__ = ["Tape", "Tensor", "backward", "grad_check"]

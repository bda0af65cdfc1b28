"""Tensor-train eigenvalue solvers for GCD and LCM tensors."""
__version__ = "0.1.0"

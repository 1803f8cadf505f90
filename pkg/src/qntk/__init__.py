"""Infinite-width NTK regression with sparsified/diagonal approximations and a
classical emulation of the quantum training pipeline."""

from __future__ import annotations

__version__ = "0.1.0"

from .activation import ActivationSpec, DualActivation, make_dual
from .approx import SparsityPattern, diagonalize, generate_pattern, sparsify
from .data import Dataset, load_mnist_idx, sample_sphere, separability
from .ntk import KernelMatrix, NtkParams, assemble_kernel, ntk_element

__all__ = [
    "ActivationSpec", "DualActivation", "make_dual",
    "SparsityPattern", "diagonalize", "generate_pattern", "sparsify",
    "Dataset", "load_mnist_idx", "sample_sphere", "separability",
    "KernelMatrix", "NtkParams", "assemble_kernel", "ntk_element",
]

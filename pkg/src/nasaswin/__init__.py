"""Noise-aware dual-branch window transformer for spotting diffusion-generated images."""

from .tensor import Tensor, Graph, backward

__version__ = "0.1.0"

__all__ = ["Tensor", "Graph", "backward", "__version__"]

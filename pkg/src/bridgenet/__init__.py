"""Joint depth super-resolution and monocular depth estimation with cross-task bridges."""

__version__ = "0.1.0"

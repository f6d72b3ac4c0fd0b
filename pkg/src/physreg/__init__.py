"""Physics-regularized least squares over truncated Fourier classes."""

__version__ = "0.1.0"

"""Numerical renormalization of critical commuting pairs and of their
dissipative two-dimensional perturbations."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("renormlab")
except PackageNotFoundError:
    __version__ = "0.1.0"

"""Persistent-homology features of MNIST digits for dense classifiers."""

__version__ = "0.1.0"

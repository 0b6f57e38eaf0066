"""Relation-network GAN laboratory: triplet losses, 2-D experiments, Dirac dynamics."""

__version__ = "0.1.0"

"""Tangent-point reinforcement learning workbench for plane localization in 3D volumes."""

__version__ = "0.1.0"

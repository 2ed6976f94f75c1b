"""Simulation library for multi-task linear transfer learning experiments."""

__version__ = "0.1.0"

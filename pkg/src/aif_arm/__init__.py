"""Active-inference body estimation and control for a simulated planar arm."""

__version__ = "0.1.0"

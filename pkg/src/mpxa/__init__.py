"""Multi-point flux (MPFA) and stress (MPSA) finite volume methods in 2D."""
__version__ = "0.1.0"

"""Free-boundary minimal surfaces in level-set domains: construction and checks."""

__version__ = "0.1.0"

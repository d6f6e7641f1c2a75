"""Dynamic pooled capacity deployment for access-hub networks."""

__version__ = "0.1.0"

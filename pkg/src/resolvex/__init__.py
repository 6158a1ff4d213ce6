"""Classical simulation of resolvent-based eigenvalue estimation for non-normal matrices."""

__version__ = "0.1.0"

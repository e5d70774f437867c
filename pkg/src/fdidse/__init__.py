"""Generator dynamic state estimation under false data injection attacks."""

__version__ = "0.1.0"

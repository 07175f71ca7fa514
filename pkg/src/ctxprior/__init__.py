"""Learn contextual expectations from ratings and fuse them with detector scores."""

__version__ = "0.1.0"

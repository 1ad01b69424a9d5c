"""Step-by-step visual instruction generation with tool-based self-reflection."""

__version__ = "0.1.0"

"""darkfuse: event/RAW low-light co-simulation and reconstruction."""

__version__ = "0.1.0"

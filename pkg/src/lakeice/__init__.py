"""Lake ice detection, surface temperature retrieval and ice phenology."""

__version__ = "0.1.0"

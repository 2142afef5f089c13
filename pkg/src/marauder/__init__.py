"""Activity recognition over ambient sensor streams via floorplan trajectory images."""

__version__ = "0.1.0"

"""DriveContext: trajectory segmentation and driving-context analysis."""

__version__ = "0.1.0"

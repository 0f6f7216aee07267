"""Line-protocol executor worker for learned functions."""

from .worker import OUTPUT_CAP, handle, main

__version__ = "0.1.0"

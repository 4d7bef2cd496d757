"""Glint-based gaze estimation with a synthetic eye/camera simulator."""

__version__ = "0.1.0"

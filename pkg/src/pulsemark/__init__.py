"""Heartbeat-based performance anomaly diagnosis for multi-threaded programs."""

__version__ = "0.1.0"

"""Online tabular-log anomaly detection by link prediction on a dynamic object/event graph."""

__version__ = "0.1.0"

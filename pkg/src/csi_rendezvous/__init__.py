"""Multi-robot rendezvous guided by Wi-Fi CSI angle-of-arrival profiles."""

__version__ = "0.1.0"

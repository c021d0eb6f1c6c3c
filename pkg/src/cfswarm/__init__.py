"""Cell-free MIMO over NGSO satellite swarms: a seedable system-level simulator."""

__version__ = "0.1.0"

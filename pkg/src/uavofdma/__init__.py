"""Max-min throughput for a UAV-served OFDMA downlink."""

__version__ = "0.1.0"

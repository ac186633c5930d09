"""Block-sparse detection of idle spatial dimensions in MU-MIMO-OFDM uplinks."""

__version__ = "0.1.0"

"""Block-moment-matrix SDP relaxations for quantum correlation problems."""

__version__ = "0.1.0"

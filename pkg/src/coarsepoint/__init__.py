"""RF lens-array angle estimation and coarse pointing for hybrid RF/FSO links."""

__version__ = "0.1.0"

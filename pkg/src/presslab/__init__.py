"""presslab: command-level simulation of Rowhammer and Row-Press mitigations."""

__version__ = "0.1.0"

"""FlexDM: batch data-mining experiments from a compact XML specification."""

__version__ = "0.1.0"

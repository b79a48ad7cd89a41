"""Online budgeted matching with discounted scores."""
__version__ = "0.1.0"

"""Editor-agnostic AI code-assist broker daemon."""

from .wire import PROTOCOL

__version__ = "0.1.0"
__all__ = ["PROTOCOL", "__version__"]

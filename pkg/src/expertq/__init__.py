"""Expert Q-learning and its Double-Dueling-Q baseline on Othello."""

from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION

__version__ = "0.1.0"
__all__ = ["KERNEL_IMPLEMENTATION", "__version__"]

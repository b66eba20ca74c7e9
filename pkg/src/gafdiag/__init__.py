"""gafdiag: angular-field imaging of vibration series, a dual-input fusion
classifier with from-scratch training, BN-scale channel pruning, and
noise-robustness evaluation tools."""

__version__ = "0.1.0"

from .errors import GafDiagError

__all__ = ["GafDiagError", "__version__"]

"""Point-token video transformer library with numpy autodiff core."""

from . import tensor

__version__ = "0.1.0"

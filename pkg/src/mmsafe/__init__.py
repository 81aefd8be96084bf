"""Safe control for a robot sharing a workspace with a human whose goal is
uncertain: three safety filters (SEA, N-MMSSA, O-MMSSA) over an
energy-function safety index, plus Bayesian goal inference and a batch
simulation harness for comparing them."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]

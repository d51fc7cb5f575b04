"""Quantum homodyne tomography with noisy data.

Simulates homodyne measurements of truncated density matrices, estimates the
density matrix by pattern functions and the Wigner function by a deconvolution
kernel, and checks the accompanying risk and decay bounds numerically.
"""

__version__ = "0.1.0"

from .errors import CapacityError, EnvelopeError, NumericalError, QhtomoError, TuningError
from .forward import NoiseModel, noisy_density, quadrature_density, wigner_eval, wigner_ft
from .sampler import Dataset, sample
from .state import DensityMatrix, StateClass, class_check, load_state, make_state, save_state

__all__ = [
    "CapacityError",
    "Dataset",
    "DensityMatrix",
    "EnvelopeError",
    "NoiseModel",
    "NumericalError",
    "QhtomoError",
    "StateClass",
    "TuningError",
    "class_check",
    "load_state",
    "make_state",
    "noisy_density",
    "quadrature_density",
    "sample",
    "save_state",
    "wigner_eval",
    "wigner_ft",
]

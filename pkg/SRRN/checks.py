import numpy as np

from .exceptions import ConfigurationError, DivergenceError

__all__ = ['check_finite', 'check_same_shape']


def check_finite(array, name, error=DivergenceError):
    if not np.all(np.isfinite(array)):
        raise error(f"non-finite values in '{name}'")
    return array


def check_same_shape(a, b, what, error=ConfigurationError):
    if a.shape != b.shape:
        raise error(f"{what}: shape {tuple(a.shape)} does not match {tuple(b.shape)}")

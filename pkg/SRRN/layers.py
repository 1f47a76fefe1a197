"""
Layer primitives of the super-resolution network.

A tensor is a C-contiguous ``float32`` ndarray of rank 4 laid out as
``(batch, channels, height, width)``. Every op here is a pure function of its
arguments and never writes to its inputs; the single exception is
``bn_forward`` in train mode, which advances the running statistics held by
its ``BnParams``.

Convolutions are stride 1 with zero padding of ``k // 2`` so spatial size is
preserved. The production kernel lowers the correlation to one matrix product
over unfolded patches; ``conv2d_naive`` is the loop-by-loop reference.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .checks import check_same_shape
from .exceptions import ConfigurationError, UninitializedStatisticsError, UsageError

__all__ = [
    'DTYPE', 'ACCUMULATE', 'TRAIN', 'EVAL',
    'as_tensor', 'ConvParams', 'BnParams',
    'conv2d_forward', 'conv2d_backward', 'conv2d_naive',
    'relu_forward', 'relu_backward',
    'add_forward', 'add_backward',
    'bn_forward', 'bn_backward',
]

logger = logging.getLogger(__name__)

DTYPE = np.float32
# gradient and loss reductions
ACCUMULATE = np.float64

TRAIN = 'train'
EVAL = 'eval'
MODES = (TRAIN, EVAL)


def as_tensor(data, name='tensor'):
    array = np.ascontiguousarray(data, dtype=DTYPE)
    if array.ndim != 4:
        raise ConfigurationError(f"{name}: expected a rank-4 tensor (n, c, h, w), got rank {array.ndim}")
    return array


def _check_mode(mode):
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}, expected one of {MODES}")


@dataclass(eq=False)
class ConvParams:
    weight: np.ndarray
    bias: np.ndarray
    name: str = 'conv'

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=DTYPE)
        self.bias = np.ascontiguousarray(self.bias, dtype=DTYPE)
        if self.weight.ndim != 4:
            raise ConfigurationError(f"{self.name}: weight must have rank 4, got {self.weight.ndim}")
        out_c, _, kh, kw = self.weight.shape
        if kh != kw or kh % 2 == 0:
            raise ConfigurationError(f"{self.name}: kernel must be square with odd size, got {kh}x{kw}")
        if self.bias.shape != (out_c,):
            raise ConfigurationError(f"{self.name}: bias shape {self.bias.shape} does not match {out_c} filters")

    @classmethod
    def he_normal(cls, in_channels, out_channels, kernel_size, rng, name='conv'):
        std = np.sqrt(2.0 / (kernel_size * kernel_size * in_channels))
        weight = rng.normal(0.0, std, size=(out_channels, in_channels, kernel_size, kernel_size))
        return cls(weight, np.zeros(out_channels), name)

    @classmethod
    def zeros(cls, in_channels, out_channels, kernel_size, name='conv'):
        return cls(np.zeros((out_channels, in_channels, kernel_size, kernel_size)), np.zeros(out_channels), name)

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def kernel_size(self):
        return self.weight.shape[2]

    @property
    def padding(self):
        return self.kernel_size // 2


@dataclass(eq=False)
class BnParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    name: str = 'bn'
    eps: float = 1e-5
    momentum: float = 0.1
    num_batches: int = 0

    def __post_init__(self):
        for attr in ('gamma', 'beta', 'running_mean', 'running_var'):
            setattr(self, attr, np.ascontiguousarray(getattr(self, attr), dtype=DTYPE))
        if self.eps <= 0:
            raise ConfigurationError(f"{self.name}: epsilon must be positive")
        if np.any(self.running_var < 0):
            raise ConfigurationError(f"{self.name}: running variance must be non-negative")

    @classmethod
    def identity(cls, channels, name='bn'):
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), name)

    @property
    def channels(self):
        return self.gamma.shape[0]

    @property
    def tracked(self):
        return self.num_batches > 0


def _check_input_channels(x, params):
    if x.shape[1] != params.in_channels:
        raise ConfigurationError(
            f"{params.name}: expected {params.in_channels} input channels, got {x.shape[1]}")


def _unfold(x, k):
    pad = k // 2
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    n, c, h, w = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def _correlate(x, weight, bias, dtype):
    n, _, h, w = x.shape
    out_c, _, k, _ = weight.shape
    cols = _unfold(x.astype(dtype, copy=False), k)
    out = cols @ weight.reshape(out_c, -1).T.astype(dtype, copy=False)
    out += bias.astype(dtype, copy=False)
    return out.reshape(n, h, w, out_c).transpose(0, 3, 1, 2)


def conv2d_forward(x, params):
    x = as_tensor(x, params.name)
    _check_input_channels(x, params)
    return np.ascontiguousarray(_correlate(x, params.weight, params.bias, DTYPE))


def conv2d_backward(x, params, grad_out):
    """
    Gradients of ``<grad_out, conv2d_forward(x, params)>`` with respect to the
    input, the weights and the bias.

    The input gradient is the correlation of ``grad_out`` with the kernel
    transposed over channels and rotated by 180 degrees, which the symmetric
    ``k // 2`` padding makes a same-size correlation again.
    """
    x = as_tensor(x, params.name)
    grad_out = as_tensor(grad_out, f"{params.name} gradient")
    _check_input_channels(x, params)
    n, _, h, w = x.shape
    expected = (n, params.out_channels, h, w)
    if grad_out.shape != expected:
        raise ConfigurationError(f"{params.name}: gradient shape {grad_out.shape} does not match output {expected}")

    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, params.out_channels).astype(ACCUMULATE)
    cols = _unfold(x.astype(ACCUMULATE), params.kernel_size)
    grad_weight = (g.T @ cols).reshape(params.weight.shape)
    grad_bias = g.sum(axis=0)

    flipped = params.weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    grad_input = _correlate(grad_out, flipped, np.zeros(params.in_channels), ACCUMULATE)
    return (np.ascontiguousarray(grad_input, dtype=DTYPE),
            grad_weight.astype(DTYPE),
            grad_bias.astype(DTYPE))


def conv2d_naive(x, params):
    x = as_tensor(x, params.name)
    _check_input_channels(x, params)
    n, c, h, w = x.shape
    k, pad = params.kernel_size, params.padding
    out = np.zeros((n, params.out_channels, h, w), dtype=ACCUMULATE)
    for b in range(n):
        for o in range(params.out_channels):
            for i in range(h):
                for j in range(w):
                    acc = float(params.bias[o])
                    for ci in range(c):
                        for di in range(k):
                            for dj in range(k):
                                y, z = i + di - pad, j + dj - pad
                                if 0 <= y < h and 0 <= z < w:
                                    acc += float(params.weight[o, ci, di, dj]) * float(x[b, ci, y, z])
                    out[b, o, i, j] = acc
    return out.astype(DTYPE)


def relu_forward(x):
    return np.maximum(as_tensor(x, 'relu'), DTYPE(0))


def relu_backward(x, grad_out):
    # subgradient at exactly 0 is 0
    return np.where(as_tensor(x, 'relu') > 0, as_tensor(grad_out, 'relu gradient'), DTYPE(0)).astype(DTYPE)


def add_forward(a, b):
    a, b = as_tensor(a, 'add'), as_tensor(b, 'add')
    check_same_shape(a, b, 'shortcut addition')
    return a + b


def add_backward(grad_out):
    grad_out = as_tensor(grad_out, 'add gradient')
    return grad_out, grad_out.copy()


def _bn_view(vector):
    return vector.reshape(1, -1, 1, 1)


def _batch_moments(x):
    x = x.astype(ACCUMULATE, copy=False)
    mean = x.mean(axis=(0, 2, 3))
    var = ((x - _bn_view(mean)) ** 2).mean(axis=(0, 2, 3))
    return mean, var


def _bn_statistics(x, params, mode):
    if x.shape[1] != params.channels:
        raise ConfigurationError(f"{params.name}: expected {params.channels} channels, got {x.shape[1]}")
    if mode == TRAIN:
        return _batch_moments(x)
    if not params.tracked:
        raise UninitializedStatisticsError(
            f"{params.name}: uninitialized statistics, run at least one train-mode batch before eval")
    return params.running_mean.astype(ACCUMULATE), params.running_var.astype(ACCUMULATE)


def bn_forward(x, params, mode=TRAIN):
    x = as_tensor(x, params.name)
    _check_mode(mode)
    mean, var = _bn_statistics(x, params, mode)
    if mode == TRAIN:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * count / (count - 1) if count > 1 else var
        params.running_mean = ((1 - params.momentum) * params.running_mean + params.momentum * mean).astype(DTYPE)
        params.running_var = ((1 - params.momentum) * params.running_var + params.momentum * unbiased).astype(DTYPE)
        params.num_batches += 1
    inv_std = 1.0 / np.sqrt(var + params.eps)
    x_hat = (x.astype(ACCUMULATE) - _bn_view(mean)) * _bn_view(inv_std)
    out = _bn_view(params.gamma.astype(ACCUMULATE)) * x_hat + _bn_view(params.beta.astype(ACCUMULATE))
    return out.astype(DTYPE)


def bn_backward(x, params, grad_out, mode=TRAIN):
    x = as_tensor(x, params.name)
    grad_out = as_tensor(grad_out, f"{params.name} gradient")
    _check_mode(mode)
    check_same_shape(x, grad_out, f"{params.name} gradient")
    mean, var = _bn_statistics(x, params, mode)
    inv_std = _bn_view(1.0 / np.sqrt(var + params.eps))
    x_hat = (x.astype(ACCUMULATE) - _bn_view(mean)) * inv_std
    g = grad_out.astype(ACCUMULATE)

    grad_gamma = (g * x_hat).sum(axis=(0, 2, 3))
    grad_beta = g.sum(axis=(0, 2, 3))
    d_hat = g * _bn_view(params.gamma.astype(ACCUMULATE))
    if mode == TRAIN:
        axes = (0, 2, 3)
        grad_input = inv_std * (d_hat - d_hat.mean(axis=axes, keepdims=True)
                                - x_hat * (d_hat * x_hat).mean(axis=axes, keepdims=True))
    else:
        grad_input = d_hat * inv_std
    return grad_input.astype(DTYPE), grad_gamma.astype(DTYPE), grad_beta.astype(DTYPE)

"""
Training: Euclidean loss on the high-frequency residual, SGD with momentum
and weight decay, adjustable gradient clipping and a step learning-rate
schedule.

The update is the descent form of heavy-ball momentum::

    g'    = clip(g, -tau / lr, tau / lr) + weight_decay * theta   (weights only)
    delta = m * delta - lr * g'
    theta = theta + delta

which keeps the per-element step of the clipped gradient bounded by ``tau``
whatever the current learning rate.
"""
import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .checks import check_finite
from .exceptions import ConfigKeyError, ConfigurationError, DataError, DivergenceError, NonFiniteGradientError, \
    UsageError
from .layers import ACCUMULATE, DTYPE, TRAIN
from .models import backward, forward
from .serializers import atomic_path
from .validators import (
    non_negative_validators, patch_size_validators, positive_count_validators, positive_real_validators,
    run_validators, scale_validators, unit_interval_validators,
)

__all__ = [
    'TrainConfig',
    'OptimizerState',
    'EpochRecord',
    'residual_loss',
    'clip_gradients',
    'sgd_step',
    'lr_at',
    'train',
    'epochs_to_threshold',
    'write_history_csv',
    'parse_scales',
    'parse_bool',
]

logger = logging.getLogger(__name__)


def parse_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_scales(value):
    if isinstance(value, str):
        value = [part for part in value.replace(' ', '').split(',') if part]
    return tuple(sorted({int(scale) for scale in value}))


@dataclass
class TrainConfig:
    base_lr: float = 0.1
    lr_step: int = 30
    momentum: float = 0.9
    weight_decay: float = 0.0001
    clip_tau: float = 0.01
    batch_size: int = 64
    patch_size: int = 41
    scales: Tuple[int, ...] = (2, 3, 4)
    epochs: int = 60
    seed: int = 0
    augment: bool = False
    threads: int = 1
    residual: bool = True
    val_fraction: float = 0.0

    def __post_init__(self):
        self.scales = parse_scales(self.scales)
        self.clean()

    def clean(self):
        run_validators(self.base_lr, positive_real_validators, 'base_lr')
        run_validators(self.lr_step, positive_count_validators, 'lr_step')
        run_validators(self.momentum, unit_interval_validators, 'momentum')
        run_validators(self.weight_decay, non_negative_validators, 'weight_decay')
        run_validators(self.clip_tau, positive_real_validators, 'clip_tau')
        run_validators(self.batch_size, positive_count_validators, 'batch_size')
        run_validators(self.patch_size, patch_size_validators, 'patch_size')
        run_validators(self.epochs, non_negative_validators, 'epochs')
        run_validators(self.threads, positive_count_validators, 'threads')
        run_validators(self.val_fraction, unit_interval_validators, 'val_fraction')
        if not self.scales:
            raise ConfigurationError('scales: at least one scale is required')
        for scale in self.scales:
            run_validators(scale, scale_validators, 'scales')
        return self

    @classmethod
    def from_mapping(cls, mapping, source=None):
        """Build a config from string values (``key=value`` files, CLI flags); unknown keys are rejected."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in mapping.items():
            if key not in fields:
                raise ConfigKeyError(key, source)
            kind = fields[key].type
            try:
                if key == 'scales':
                    values[key] = parse_scales(raw)
                elif kind in (bool, 'bool'):
                    values[key] = parse_bool(raw)
                elif kind in (int, 'int'):
                    values[key] = int(raw)
                else:
                    values[key] = float(raw)
            except (TypeError, ValueError):
                raise ConfigurationError(f"{key}: cannot interpret {raw!r}") from None
        return cls(**values)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class OptimizerState:
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    step: int = 0

    @classmethod
    def for_parameters(cls, params):
        return cls({name: np.zeros_like(array) for name, array in dict(params).items()})


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_train_loss: float
    val_psnr: Dict[int, float] = field(default_factory=dict)


def lr_at(epoch, config):
    if epoch < 0:
        raise UsageError(f"epoch must be non-negative, got {epoch}")
    return config.base_lr * 10.0 ** -(epoch // config.lr_step)


def residual_loss(prediction, lr_patch, hr_patch):
    """
    Euclidean loss between a predicted residual and the high frequencies
    ``hr - lr``: ``1 / (2n) * sum ||prediction - (hr - lr)||^2`` over a batch
    of ``n`` patches. Returns the loss and its gradient with respect to the
    prediction.
    """
    prediction, lr_patch, hr_patch = (np.asarray(a) for a in (prediction, lr_patch, hr_patch))
    if not prediction.shape == lr_patch.shape == hr_patch.shape:
        raise UsageError(f"loss operands differ in shape: {prediction.shape}, {lr_patch.shape}, {hr_patch.shape}")
    n = prediction.shape[0] if prediction.ndim else 1
    diff = prediction.astype(ACCUMULATE) - (hr_patch.astype(ACCUMULATE) - lr_patch.astype(ACCUMULATE))
    loss = float(np.sum(diff * diff) / (2 * n))
    return loss, (diff / n).astype(DTYPE)


def clip_gradients(grads, lr, tau):
    bound = tau / lr
    clipped = type(grads)()
    for name, grad in grads.items():
        clipped[name] = np.clip(grad, -bound, bound).astype(grad.dtype, copy=False)
    return clipped


def _decays(name):
    # biases and BN scale/shift are not decayed
    return name.endswith('.weight')


def sgd_step(params, grads, state, config, lr=None):
    """
    Apply one momentum step in place to every array of ``params``.

    ``grads`` are expected to be clipped already. A non-finite gradient aborts
    the step before any parameter is touched.
    """
    if lr is None:
        lr = lr_at(state.epoch, config)
    params = dict(params)
    for name in params:
        if name not in grads:
            raise UsageError(f"no gradient for parameter '{name}'")
        check_finite(grads[name], name, error=lambda message, name=name: NonFiniteGradientError(name))

    for name, theta in params.items():
        grad = grads[name]
        if config.weight_decay and _decays(name):
            grad = grad + config.weight_decay * theta
        velocity = state.velocity.get(name)
        if velocity is None:
            velocity = state.velocity[name] = np.zeros_like(theta)
        velocity *= config.momentum
        velocity -= lr * grad
        theta += velocity
    state.step += 1


def _batch_loss(net, lr_batch, hr_batch, residual):
    out, cache = forward(net, lr_batch, TRAIN, skip=residual)
    loss, grad = residual_loss(out - lr_batch, lr_batch, hr_batch)
    return loss, grad, cache


def train(net, dataset, config, validation=None):
    """
    Train ``net`` on ``dataset`` (a ``SampleStream``) for ``config.epochs``
    epochs and return ``(net, history)``.

    Each batch runs forward, loss, backward, clipping and one SGD step. After
    every epoch the mean training loss and, when ``validation`` images are
    given, the PSNR per configured scale are recorded. The best state (highest
    mean validation PSNR, or lowest training loss without validation) is kept
    on ``net.best_state``; any non-finite loss, gradient or weight raises
    ``DivergenceError`` carrying that state and the history so far.
    """
    history: List[EpochRecord] = []
    net.best_state = net.state_dict()
    if config.epochs == 0:
        return net, history
    if len(dataset) == 0:
        raise DataError('training dataset is empty')

    state = OptimizerState.for_parameters(net.named_parameters())
    try:
        _run_epochs(net, dataset, config, validation, state, history)
    except DivergenceError as e:
        e.best_state = net.best_state
        e.history = history
        raise
    return net, history


def _run_epochs(net, dataset, config, validation, state, history):
    from .metrics import evaluate

    best_score = -math.inf
    for epoch in range(config.epochs):
        state.epoch = epoch
        lr = lr_at(epoch, config)
        total, count = 0.0, 0
        for lr_batch, hr_batch in dataset.batches(epoch, config.batch_size):
            loss, grad, cache = _batch_loss(net, lr_batch, hr_batch, config.residual)
            if not math.isfinite(loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}, step {state.step}")
            grads = clip_gradients(backward(net, cache, grad), lr, config.clip_tau)
            sgd_step(net.named_parameters(), grads, state, config, lr)
            net.mark_updated()
            total += loss * lr_batch.shape[0]
            count += lr_batch.shape[0]

        for name, array in net.named_parameters():
            check_finite(array, name)
            check_finite(state.velocity[name], f"{name} velocity")

        record = EpochRecord(epoch, lr, total / count)
        if validation:
            report = evaluate(net, validation, config.scales, threads=config.threads)
            record.val_psnr = {scale: report.mean(scale)[0] for scale in report.scales}
            score = float(np.mean(list(record.val_psnr.values())))
        else:
            score = -record.mean_train_loss
        if score > best_score:
            net.best_state, best_score = net.state_dict(), score
        history.append(record)
        logger.info("epoch %d lr %.3g loss %.6g%s", epoch, lr, record.mean_train_loss,
                    ''.join(f" psnr_x{s} {p:.3f}" for s, p in sorted(record.val_psnr.items())))


def epochs_to_threshold(history, threshold):
    """First epoch (counting from 1) whose mean training loss is at or below ``threshold``; None if never."""
    for record in history:
        if record.mean_train_loss <= threshold:
            return record.epoch + 1
    return None


HISTORY_COLUMNS = ['epoch', 'lr', 'mean_train_loss', 'val_psnr_x2', 'val_psnr_x3', 'val_psnr_x4']


def write_history_csv(history, path):
    with atomic_path(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_COLUMNS)
        for record in history:
            writer.writerow([record.epoch, f"{record.lr:.6g}", f"{record.mean_train_loss:.8g}"]
                            + [f"{record.val_psnr[s]:.4f}" if s in record.val_psnr else '' for s in (2, 3, 4)])

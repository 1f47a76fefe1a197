"""
Desk-scale experiment harnesses: network shape families at matched depth and
paired comparisons of residual learning, activation position, batch
normalisation and multi-scale training. Every run in a harness shares the
seed, data and schedule so only the varied factor differs.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .analysis import count_parameters
from .data import DatasetManifest, build_dataset
from .exceptions import ConfigurationError
from .metrics import bicubic_baseline, evaluate
from .models import AFTER_CONV, BEFORE_CONV, ArchSpec, build_network, find_preset, format_arch, resolve_arch
from .optim import epochs_to_threshold, residual_loss, train
from .serializers import atomic_path

__all__ = [
    'SHAPE_FAMILIES',
    'ExperimentRow',
    'shape_widths',
    'shape_families',
    'train_and_score',
    'run_shapes',
    'compare_residual_learning',
    'compare_relu_position',
    'compare_batch_norm',
    'compare_scale_training',
    'compare_architectures',
    'write_rows_csv',
]

logger = logging.getLogger(__name__)

INCREASE = 'increase'
DECREASE = 'decrease'
INCREASE_DECREASE = 'increase-decrease'
DECREASE_INCREASE = 'decrease-increase'
BASELINE = 'baseline'
SHAPE_FAMILIES = (INCREASE, DECREASE, INCREASE_DECREASE, DECREASE_INCREASE, BASELINE)
MIN_BASE_WIDTH = 8


def _ramp(low, high, count):
    return [int(round(w)) for w in np.linspace(low, high, count)] if count > 1 else [high]


def shape_widths(family, base_width, containers=6):
    """Per-container widths of ``family``: linear between ``round(N / 4)`` and ``N``."""
    low, high = max(1, int(round(base_width / 4))), base_width
    up = _ramp(low, high, math.ceil(containers / 2))
    if family == INCREASE:
        return _ramp(low, high, containers)
    if family == DECREASE:
        return _ramp(low, high, containers)[::-1]
    if family == INCREASE_DECREASE:
        return up + up[::-1][containers % 2:]
    if family == DECREASE_INCREASE:
        return up[::-1] + up[containers % 2:]
    if family == BASELINE:
        return [high] * containers
    raise ConfigurationError(f"unknown shape family {family!r}, expected one of {SHAPE_FAMILIES}")


def shape_families(base_width, containers=6, units=2, plain=False):
    """The five shape families as ``ArchSpec``s of equal depth, keyed by family name."""
    if base_width < MIN_BASE_WIDTH:
        raise ConfigurationError(f"base width must be at least {MIN_BASE_WIDTH}, got {base_width}")
    if containers < 2 or units < 1:
        raise ConfigurationError(f"need at least 2 containers and 1 unit each, got {containers} x {units}")
    return {
        family: ArchSpec(tuple((w, units) for w in shape_widths(family, base_width, containers)), shortcuts=not plain)
        for family in SHAPE_FAMILIES
    }


@dataclass
class ExperimentRow:
    label: str
    arch: str
    parameters: int
    depth: int
    final_loss: float
    psnr: Dict[int, float] = field(default_factory=dict)
    ssim: Dict[int, float] = field(default_factory=dict)
    epochs_to_threshold: Optional[int] = None
    history: List = field(default_factory=list, repr=False)

    def as_dict(self, scales=(2, 3, 4)):
        row = {
            'label': self.label,
            'arch': self.arch,
            'parameters': self.parameters,
            'depth': self.depth,
            'final_loss': '' if math.isnan(self.final_loss) else f"{self.final_loss:.8g}",
            'epochs_to_threshold': '' if self.epochs_to_threshold is None else self.epochs_to_threshold,
        }
        for scale in scales:
            row[f"psnr_x{scale}"] = f"{self.psnr[scale]:.4f}" if scale in self.psnr else ''
            row[f"ssim_x{scale}"] = f"{self.ssim[scale]:.4f}" if scale in self.ssim else ''
        return row


def _manifest(config, images):
    return DatasetManifest(images=images, scales=config.scales, patch_size=config.patch_size,
                           stride=config.patch_size, seed=config.seed, augment=config.augment)


def train_and_score(label, spec, train_images, val_images, config, eval_scales=None, threshold=None, dataset=None,
                    track=False):
    """
    Train one network from ``config.seed`` and score it on ``val_images`` at
    ``eval_scales``. With ``track`` the validation PSNR is also recorded in the
    history after every epoch.
    """
    spec = resolve_arch(spec)
    if dataset is None:
        dataset = build_dataset(_manifest(config, train_images), threads=config.threads)
    net = build_network(spec, seed=config.seed)
    net, history = train(net, dataset, config, validation=val_images if track else None)
    report = evaluate(net, val_images, eval_scales or config.scales, threads=config.threads)
    row = ExperimentRow(
        label, format_arch(spec), count_parameters(spec), spec.depth,
        history[-1].mean_train_loss if history else float('nan'),
        {s: report.mean(s)[0] for s in report.scales},
        {s: report.mean(s)[1] for s in report.scales},
        epochs_to_threshold(history, threshold) if threshold is not None else None,
        history,
    )
    logger.info("%s %s: %s", label, row.arch, ', '.join(f"x{s} {p:.3f} dB" for s, p in sorted(row.psnr.items())))
    return row


def run_shapes(base_width, train_images, val_images, config, containers=6, units=2, plain=False):
    """Train each shape family with the shared seed; rows come back in family order."""
    dataset = build_dataset(_manifest(config, train_images), threads=config.threads)
    families = shape_families(base_width, containers, units, plain)
    return [train_and_score(family, spec, train_images, val_images, config, dataset=dataset)
            for family, spec in families.items()]


def zero_residual_loss(dataset):
    """Training loss of predicting no residual at all (the bicubic input itself)."""
    total = 0.0
    for lr_batch, hr_batch in dataset.batches(0, 256):
        loss, _ = residual_loss(np.zeros_like(lr_batch), lr_batch, hr_batch)
        total += loss * lr_batch.shape[0]
    return total / len(dataset)


def compare_residual_learning(spec, train_images, val_images, config, threshold_factor=2.0):
    """
    Residual learning against direct prediction of the HR image. Convergence
    speed is the first epoch whose loss falls to ``threshold_factor`` times the
    loss of predicting no residual.
    """
    spec = resolve_arch(spec)
    dataset = build_dataset(_manifest(config, train_images), threads=config.threads)
    threshold = threshold_factor * zero_residual_loss(dataset)
    return [
        train_and_score('residual', spec, train_images, val_images, config.replace(residual=True),
                        threshold=threshold, dataset=dataset),
        train_and_score('direct', spec, train_images, val_images, config.replace(residual=False),
                        threshold=threshold, dataset=dataset),
    ]


def compare_relu_position(spec, train_images, val_images, config):
    spec = resolve_arch(spec)
    dataset = build_dataset(_manifest(config, train_images), threads=config.threads)
    return [train_and_score(f"relu-{position}", spec.replace(relu_position=position), train_images, val_images,
                            config, dataset=dataset)
            for position in (BEFORE_CONV, AFTER_CONV)]


def compare_batch_norm(spec, train_images, val_images, config):
    spec = resolve_arch(spec)
    dataset = build_dataset(_manifest(config, train_images), threads=config.threads)
    return [train_and_score(label, spec.replace(use_bn=use_bn), train_images, val_images, config, dataset=dataset)
            for label, use_bn in (('no-bn', False), ('bn', True))]


def compare_scale_training(spec, train_images, val_images, config):
    """
    One network trained on every scale of ``config.scales`` against one
    network per single scale, all evaluated at every scale, plus the bicubic
    rows for reference.
    """
    spec = resolve_arch(spec)
    scales = config.scales
    rows = [train_and_score('multiscale', spec, train_images, val_images, config, eval_scales=scales)]
    for scale in scales:
        rows.append(train_and_score(f"x{scale}-only", spec, train_images, val_images,
                                    config.replace(scales=(scale,)), eval_scales=scales))
    baseline = bicubic_baseline(val_images, scales, threads=config.threads)
    rows.append(ExperimentRow('bicubic', '', 0, 0, float('nan'),
                              {s: baseline.mean(s)[0] for s in scales},
                              {s: baseline.mean(s)[1] for s in scales}))
    return rows


def write_rows_csv(rows, path, scales=(2, 3, 4)):
    columns = ['label', 'arch', 'parameters', 'depth', 'final_loss', 'epochs_to_threshold'] + \
              [f"{metric}_x{s}" for s in scales for metric in ('psnr', 'ssim')]
    with atomic_path(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_dict(scales))


def arch_label(spec):
    preset = find_preset(spec)
    return preset.name if preset is not None else format_arch(spec)


def compare_architectures(spec, train_images, val_images, config, others=()):
    """
    ``spec`` against each of ``others`` on the same patches and seed, e.g. a
    residual network against the plain stack of equal depth, or one layout
    against its wider or deeper variant. Histories carry the validation PSNR of
    every epoch.
    """
    specs = [resolve_arch(spec)] + [resolve_arch(other) for other in others]
    if len(specs) < 2:
        raise ConfigurationError('an architecture comparison needs at least two architectures')
    labels = [arch_label(s) for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"architectures to compare must differ, got {', '.join(labels)}")
    dataset = build_dataset(_manifest(config, train_images), threads=config.threads)
    return [train_and_score(label, s, train_images, val_images, config, dataset=dataset, track=True)
            for label, s in zip(labels, specs)]

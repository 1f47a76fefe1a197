"""
PSNR and SSIM on the luminance plane.

Both metrics work on 8-bit levels: planes are clipped to [0, 1], quantised
with ``floor(x * 255 + 0.5)`` and ``shave`` pixels are cropped from every
border (the scale factor by default) before comparison.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from .exceptions import ConfigurationError, DataError, UsageError
from .layers import DTYPE
from .models import predict
from .serializers import atomic_path

__all__ = [
    'PSNR_CAP',
    'EvalRow',
    'EvalReport',
    'quantize',
    'shave_border',
    'psnr',
    'ssim',
    'evaluate',
    'bicubic_baseline',
    'write_report_csv',
    'format_report',
]

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def quantize(plane):
    return np.floor(np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0) * PEAK + 0.5)


def shave_border(plane, shave):
    if shave < 0 or 2 * shave >= min(plane.shape[:2]):
        raise UsageError(f"shave {shave} must be below half the smallest dim of a {plane.shape[0]}x{plane.shape[1]} image")
    return plane[shave:plane.shape[0] - shave, shave:plane.shape[1] - shave] if shave else plane


def _prepare(a, b, shave):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"cannot compare images of dims {a.shape} and {b.shape}")
    return shave_border(quantize(a), shave), shave_border(quantize(b), shave)


def psnr(a, b, shave=0):
    a, b = _prepare(a, b, shave)
    if np.array_equal(a, b):
        return PSNR_CAP
    return float(peak_signal_noise_ratio(b, a, data_range=PEAK))


def ssim(a, b, shave=0):
    """Mean single-scale SSIM over every full window position (11x11 Gaussian, sigma 1.5)."""
    a, b = _prepare(a, b, shave)
    if min(a.shape) < SSIM_WINDOW:
        raise DataError(f"image of {a.shape[0]}x{a.shape[1]} after shaving is smaller than the "
                        f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    return float(structural_similarity(a, b, data_range=PEAK, gaussian_weights=True, sigma=SSIM_SIGMA,
                                       use_sample_covariance=False))


@dataclass
class EvalRow:
    image: str
    scale: int
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    method: str = 'model'
    dataset: str = ''
    rows: List[EvalRow] = field(default_factory=list)
    shave: Dict[int, int] = field(default_factory=dict)

    @property
    def scales(self):
        return sorted({row.scale for row in self.rows})

    def rows_for(self, scale):
        return [row for row in self.rows if row.scale == scale]

    def mean(self, scale):
        """``(mean PSNR, mean SSIM)`` over the images evaluated at ``scale``."""
        rows = self.rows_for(scale)
        if not rows:
            raise UsageError(f"no results at scale {scale}")
        return float(np.mean([r.psnr for r in rows])), float(np.mean([r.ssim for r in rows]))


def _network_input(plane):
    return np.asarray(plane, dtype=DTYPE)


def _names(images, names):
    if names is not None:
        return [str(name) for name in names]
    return [str(getattr(image, 'name', i)) if not isinstance(image, np.ndarray) else str(i)
            for i, image in enumerate(images)]


def _run(images, scales, shave, threads, score, method, dataset, names):
    from .data import degrade, load_luminance, modcrop

    if not images:
        raise DataError('evaluation image set is empty')
    names = _names(images, names)
    planes = [load_luminance(image) for image in images]

    def one(plane):
        results = []
        for scale in scales:
            hr = modcrop(plane, scale)
            lr = _network_input(degrade(hr, scale))
            out = np.clip(score(lr), 0.0, 1.0)
            width = scale if shave is None else shave
            results.append((scale, psnr(out, hr, width), ssim(out, hr, width)))
        return results

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(one, planes))
    else:
        per_image = [one(plane) for plane in planes]

    report = EvalReport(method, dataset, shave={s: (s if shave is None else shave) for s in scales})
    for name, results in zip(names, per_image):
        report.rows += [EvalRow(name, scale, p, s) for scale, p, s in results]
    return report


def evaluate(net, images, scales, shave=None, threads=1, dataset='', names=None):
    """
    Score ``net`` on ``images`` (planes or paths) at every scale: crop to a
    multiple of the scale, degrade, run the network, clamp to [0, 1] and
    compare against the cropped original.
    """
    score = lambda lr: predict(net, lr[None, None])[0, 0]
    report = _run(images, scales, shave, threads, score, 'model', dataset, names)
    for scale in report.scales:
        logger.debug("x%d: psnr %.4f ssim %.4f", scale, *report.mean(scale))
    return report


def bicubic_baseline(images, scales, shave=None, threads=1, dataset='', names=None):
    """The same protocol with the degraded input itself as the prediction."""
    return _run(images, scales, shave, threads, lambda lr: lr, 'bicubic', dataset, names)


REPORT_COLUMNS = ['dataset', 'scale', 'method', 'psnr', 'ssim', 'shave', 'images']


def _mean_rows(reports):
    for report in reports:
        for scale in report.scales:
            p, s = report.mean(scale)
            yield [report.dataset, scale, report.method, p, s, report.shave.get(scale, scale),
                   len(report.rows_for(scale))]


def write_report_csv(reports, path):
    """One row per (dataset, scale, method) with mean PSNR and SSIM."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    with atomic_path(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for row in _mean_rows(reports):
            row[3], row[4] = f"{row[3]:.4f}", f"{row[4]:.4f}"
            writer.writerow(row)


def format_report(reports):
    if isinstance(reports, EvalReport):
        reports = [reports]
    lines = [f"{'dataset':<12} {'scale':>5} {'method':<10} {'PSNR':>9} {'SSIM':>7}"]
    for dataset, scale, method, p, s, _, _ in _mean_rows(reports):
        lines.append(f"{dataset or '-':<12} {'x' + str(scale):>5} {method:<10} {p:9.4f} {s:7.4f}")
    return '\n'.join(lines)

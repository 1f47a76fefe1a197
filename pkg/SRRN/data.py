"""
Image ingestion and the degradation model.

Image planes are ``float64`` arrays with values in [0, 1]: ``(h, w)`` for
luminance or grayscale, ``(h, w, 3)`` for colour. Low-resolution inputs are
simulated by a bicubic downscale followed by a bicubic upscale back to the
high-resolution grid, so network input and target share dims.
"""
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .exceptions import ConfigKeyError, ConfigurationError, DataError, SkippedImageWarning
from .layers import DTYPE
from .serializers import atomic_path
from .validators import (
    patch_size_validators, positive_count_validators, run_validators, scale_validators,
)

__all__ = [
    'IMAGE_SUFFIXES',
    'SamplePair',
    'DatasetManifest',
    'SampleStream',
    'read_image',
    'write_image',
    'to_uint8',
    'load_luminance',
    'patch_count',
    'list_images',
    'rgb_to_ycbcr',
    'ycbcr_to_rgb',
    'to_luminance',
    'from_luminance',
    'cubic',
    'resize_weights',
    'bicubic_resize',
    'modcrop',
    'degrade',
    'extract_patches',
    'augment_pair',
    'build_dataset',
    'synthetic_textures',
    'split_holdout',
]

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = ('.png', '.pgm', '.ppm', '.bmp', '.tif', '.tiff', '.jpg', '.jpeg')
_GRAY_MODES = ('1', 'L', 'LA', 'I', 'I;16', 'F')

# ITU-R BT.601, full range (JFIF)
_RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_YCBCR_TO_RGB = np.array([
    [1.0, 0.0, 1.402],
    [1.0, -0.344136, -0.714136],
    [1.0, 1.772, 0.0],
])
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])

BICUBIC_A = -0.5


# Image I/O

def read_image(path):
    """Read an image as a float plane in [0, 1]; grayscale files stay single-channel."""
    try:
        with Image.open(path) as image:
            if image.mode in ('I', 'I;16'):
                array = np.asarray(image, dtype=np.float64) / 65535.0
            elif image.mode in _GRAY_MODES:
                array = np.asarray(image.convert('L'), dtype=np.float64) / 255.0
            else:
                array = np.asarray(image.convert('RGB'), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise DataError(f"image not found: {path}") from None
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"cannot read image {path}: {e}") from None
    return np.clip(array, 0.0, 1.0)


def to_uint8(plane):
    return np.floor(np.clip(plane, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_image(path, plane):
    plane = np.asarray(plane)
    if plane.ndim == 3 and plane.shape[2] == 1:
        plane = plane[..., 0]
    if plane.ndim not in (2, 3) or (plane.ndim == 3 and plane.shape[2] != 3):
        raise ConfigurationError(f"cannot write an image of shape {plane.shape}")
    suffix = Path(path).suffix.lower()
    image_format = Image.registered_extensions().get(suffix)
    if image_format is None:
        raise ConfigurationError(f"unsupported image suffix {suffix!r} for {path}")
    image = Image.fromarray(to_uint8(plane))
    with atomic_path(path) as handle:
        image.save(handle, format=image_format)


def list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"image directory not found: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    if not paths:
        raise DataError(f"no images in {directory}")
    return paths


# Colour

def rgb_to_ycbcr(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ _RGB_TO_YCBCR.T + _CHROMA_OFFSET


def ycbcr_to_rgb(ycbcr):
    ycbcr = np.asarray(ycbcr, dtype=np.float64)
    return np.clip((ycbcr - _CHROMA_OFFSET) @ _YCBCR_TO_RGB.T, 0.0, 1.0)


def to_luminance(image):
    """Y plane of a colour image; grayscale planes are returned as they are."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return np.clip(image @ _RGB_TO_YCBCR[0], 0.0, 1.0)


def from_luminance(y, cb, cr):
    return ycbcr_to_rgb(np.stack([y, cb, cr], axis=-1))


# Resampling

def cubic(x, a=BICUBIC_A):
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    return np.where(x <= 1, (a + 2) * x3 - (a + 3) * x2 + 1,
                    np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0))


def resize_weights(in_size, out_size):
    """
    ``(out_size, in_size)`` matrix resampling one axis with the cubic kernel.

    Sample centres are aligned (``x_in = (i + 0.5) * in / out - 0.5``). When
    minifying, the kernel is stretched by ``in / out`` so it also low-passes.
    Taps falling outside the input are folded onto the edge pixel and every
    row is normalised to sum to one.
    """
    if in_size < 1 or out_size < 1:
        raise ConfigurationError(f"resize dims must be at least 1, got {in_size} -> {out_size}")
    ratio = in_size / out_size
    stretch = max(ratio, 1.0)
    support = 2.0 * stretch
    centres = (np.arange(out_size) + 0.5) * ratio - 0.5
    first = np.floor(centres - support).astype(np.int64) + 1
    taps = first[:, None] + np.arange(int(math.ceil(2 * support)) + 1)[None, :]
    weights = cubic((centres[:, None] - taps) / stretch)
    matrix = np.zeros((out_size, in_size))
    rows = np.broadcast_to(np.arange(out_size)[:, None], taps.shape)
    np.add.at(matrix, (rows, np.clip(taps, 0, in_size - 1)), weights)
    return matrix / matrix.sum(axis=1, keepdims=True)


def bicubic_resize(image, out_h, out_w):
    image = np.asarray(image, dtype=np.float64)
    rows = resize_weights(image.shape[0], out_h)
    cols = resize_weights(image.shape[1], out_w)
    if image.ndim == 2:
        out = rows @ image @ cols.T
    else:
        out = np.einsum('oh,hwc,pw->opc', rows, image, cols)
    return np.clip(out, 0.0, 1.0)


def modcrop(image, scale):
    """Top-left anchored crop to the largest multiple of ``scale`` in both dims."""
    h, w = image.shape[:2]
    return image[:h - h % scale, :w - w % scale]


def degrade(hr, scale, crop=True):
    """
    Simulate the low-resolution observation of ``hr`` at the HR grid size:
    bicubic downscale by ``scale`` then bicubic upscale back.

    With ``crop`` the image is first cropped to a multiple of ``scale`` and the
    result has the cropped dims. Without it the image is edge-padded to the
    next multiple instead and the result is cut back to the original dims.
    """
    hr = np.asarray(hr, dtype=np.float64)
    h, w = hr.shape[:2]
    if h < scale or w < scale:
        raise DataError(f"image of {h}x{w} is smaller than the scale factor {scale}")
    if crop:
        hr = modcrop(hr, scale)
        padded = hr
    else:
        pad = [(0, -h % scale), (0, -w % scale)] + [(0, 0)] * (hr.ndim - 2)
        padded = np.pad(hr, pad, mode='edge')
    ph, pw = padded.shape[:2]
    low = bicubic_resize(padded, ph // scale, pw // scale)
    up = bicubic_resize(low, ph, pw)
    return up if crop else up[:h, :w]


# Patches

@dataclass
class SamplePair:
    lr: np.ndarray
    hr: np.ndarray
    scale: int


def patch_count(h, w, patch_size, stride):
    if patch_size > min(h, w):
        return 0
    return ((h - patch_size) // stride + 1) * ((w - patch_size) // stride + 1)


def extract_patches(hr, lr, patch_size, stride, scale=0):
    """Co-located ``patch_size`` square pairs on a regular grid; an image smaller than the patch is skipped."""
    if hr.shape != lr.shape:
        raise ConfigurationError(f"HR {hr.shape} and LR {lr.shape} images differ in dims")
    h, w = hr.shape[:2]
    if patch_size > min(h, w):
        warnings.warn(SkippedImageWarning(
            f"image of {h}x{w} is smaller than the {patch_size}x{patch_size} patch; skipped"),
            category=SkippedImageWarning)
        return []
    windows_hr = sliding_window_view(hr, (patch_size, patch_size))[::stride, ::stride]
    windows_lr = sliding_window_view(lr, (patch_size, patch_size))[::stride, ::stride]
    return [SamplePair(windows_lr[i, j].copy(), windows_hr[i, j].copy(), scale)
            for i in range(windows_hr.shape[0]) for j in range(windows_hr.shape[1])]


def _dihedral(plane, k):
    plane = np.rot90(plane, k % 4, axes=(-2, -1))
    if k >= 4:
        plane = plane[..., ::-1]
    return np.ascontiguousarray(plane)


def augment_pair(pair, k):
    """Apply dihedral transform ``k`` (0..7; 0 is identity) identically to both planes."""
    if not 0 <= k < 8:
        raise ConfigurationError(f"dihedral transform index must be in 0..7, got {k}")
    return SamplePair(_dihedral(pair.lr, k), _dihedral(pair.hr, k), pair.scale)


# Dataset

_MANIFEST_KEYS = ('images', 'scales', 'patch', 'stride', 'seed', 'augment')


@dataclass
class DatasetManifest:
    images: List = field(default_factory=list)
    scales: Tuple[int, ...] = (2, 3, 4)
    patch_size: int = 41
    stride: int = 41
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        self.scales = tuple(sorted({int(s) for s in self.scales}))
        self.clean()

    def clean(self):
        if not self.images:
            raise DataError('manifest lists no images')
        if not self.scales:
            raise ConfigurationError('scales: at least one scale is required')
        for scale in self.scales:
            run_validators(scale, scale_validators, 'scales')
        run_validators(self.patch_size, patch_size_validators, 'patch')
        run_validators(self.stride, positive_count_validators, 'stride')
        return self

    @classmethod
    def from_file(cls, path, **overrides):
        """Read a ``key=value`` manifest; ``images`` names a directory relative to the manifest."""
        from .config import read_key_values
        from .optim import parse_bool, parse_scales

        values = read_key_values(path)
        for key in values:
            if key not in _MANIFEST_KEYS:
                raise ConfigKeyError(key, os.fspath(path))
        if 'images' not in values:
            raise ConfigurationError(f"{path}: manifest needs an images=<dir> entry")
        directory = Path(path).parent / values['images']
        try:
            kwargs = {
                'images': list_images(directory),
                'scales': parse_scales(values.get('scales', '2,3,4')),
                'patch_size': int(values.get('patch', 41)),
                'stride': int(values.get('stride', 41)),
                'seed': int(values.get('seed', 0)),
                'augment': parse_bool(values.get('augment', False)),
            }
        except ValueError as e:
            raise ConfigurationError(f"{path}: {e}") from None
        kwargs.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**kwargs)

    def load_images(self):
        return [load_luminance(image) for image in self.images]


def load_luminance(image):
    if isinstance(image, (str, os.PathLike)):
        image = read_image(image)
    return to_luminance(image)


class SampleStream:
    """
    Multi-scale patch pairs as contiguous ``(n, 1, p, p)`` float32 stacks.

    The order of epoch ``e`` is a permutation drawn from a generator seeded
    with ``(seed, e)``: fixed across runs and different every epoch.
    """

    def __init__(self, pairs, seed=0, augment=False):
        self.seed = seed
        self.augment = augment
        if pairs:
            self.lr = np.stack([p.lr for p in pairs])[:, None].astype(DTYPE)
            self.hr = np.stack([p.hr for p in pairs])[:, None].astype(DTYPE)
        else:
            self.lr = self.hr = np.zeros((0, 1, 0, 0), dtype=DTYPE)
        self.scales = np.array([p.scale for p in pairs], dtype=np.int64)

    def __len__(self):
        return len(self.scales)

    def scale_counts(self):
        values, counts = np.unique(self.scales, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))

    def _rng(self, epoch):
        return np.random.default_rng([self.seed, epoch])

    def order(self, epoch):
        return self._rng(epoch).permutation(len(self))

    def batches(self, epoch, batch_size):
        rng = self._rng(epoch)
        order = rng.permutation(len(self))
        transforms = rng.integers(0, 8, size=len(self)) if self.augment else None
        for start in range(0, len(order), batch_size):
            index = order[start:start + batch_size]
            lr, hr = self.lr[index], self.hr[index]
            if transforms is not None:
                lr = np.stack([_dihedral(p, k) for p, k in zip(lr, transforms[index])])
                hr = np.stack([_dihedral(p, k) for p, k in zip(hr, transforms[index])])
            yield lr, hr


def _image_pairs(plane, scales, patch_size, stride):
    pairs = []
    for scale in scales:
        try:
            lr = degrade(plane, scale, crop=False)
        except DataError as e:
            warnings.warn(SkippedImageWarning(f"{e}; skipped at x{scale}"), category=SkippedImageWarning)
            continue
        pairs += extract_patches(plane, lr, patch_size, stride, scale)
    return pairs


def build_dataset(manifest, images=None, threads=1):
    """
    Degrade every image at every manifest scale, cut patch pairs and merge
    them in image order. ``images`` replaces the manifest's image list with
    already-loaded planes.
    """
    planes = [load_luminance(image) for image in (manifest.images if images is None else images)]
    work = lambda plane: _image_pairs(plane, manifest.scales, manifest.patch_size, manifest.stride)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(work, planes))
    else:
        per_image = [work(plane) for plane in planes]
    pairs = [pair for image_pairs in per_image for pair in image_pairs]
    if not pairs:
        raise DataError('dataset is empty: no image yields a patch at the configured size')

    stream = SampleStream(pairs, manifest.seed, manifest.augment)
    logger.debug("dataset: %d pairs from %d images, per scale %s", len(stream), len(planes), stream.scale_counts())
    return stream


# Desk-scale helpers

def synthetic_textures(count, size=64, seed=0):
    """Deterministic smooth test images: oriented sinusoids plus blurred noise, scaled into [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images = []
    for _ in range(count):
        plane = np.zeros((size, size))
        for _ in range(rng.integers(3, 7)):
            angle = rng.uniform(0, np.pi)
            frequency = rng.uniform(0.05, 0.6)
            plane += rng.uniform(0.3, 1.0) * np.sin(
                frequency * (np.cos(angle) * xx + np.sin(angle) * yy) + rng.uniform(0, 2 * np.pi))
        plane += ndimage.gaussian_filter(rng.normal(0.0, 1.5, (size, size)), sigma=1.0, mode='reflect')
        low, high = plane.min(), plane.max()
        images.append(0.05 + 0.9 * (plane - low) / (high - low if high > low else 1.0))
    return images


def split_holdout(images: Sequence, fraction, seed=0):
    """Split by image into ``(train, validation)``; a positive fraction holds out at least one image."""
    if not 0 <= fraction < 1:
        raise ConfigurationError(f"holdout fraction must be in [0, 1), got {fraction}")
    images = list(images)
    count = int(round(len(images) * fraction))
    if fraction > 0 and len(images) > 1:
        count = min(max(count, 1), len(images) - 1)
    order = np.random.default_rng(seed).permutation(len(images))
    held = set(order[:count].tolist())
    return ([image for i, image in enumerate(images) if i not in held],
            [image for i, image in enumerate(images) if i in held])

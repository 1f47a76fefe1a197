"""
Static analyses of an architecture: depth, parameter accounting, receptive
field and the unfolded-path view of the residual body.

Parameter count, closed form. With ``conv(i, o, k) = o * (i * k * k + 1)``,
head width ``N1``, ``F`` head and ``R`` tail convolutions and ``c``
convolutions per unit::

    head  = conv(1, N1, 3) + (F - 1) * conv(N1, N1, 3)
    body  = sum over containers (N, k) entered from width P:
              conv(P, N, 3) + (c - 1) * conv(N, N, 3)         first unit
            + [P != N and shortcuts] conv(P, N, proj)         projection
            + (k - 1) * c * conv(N, N, 3)                     other units
            + [bn] 2 * channels for every normalised activation
    tail  = (R - 1) * conv(NL, NL, 3) + conv(NL, 1, 3)

where ``NL`` is the last container's width. BN running statistics are
buffers and are not counted.
"""
import itertools
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict

from .exceptions import PathEnumerationWarning, UsageError
from .models import BEFORE_CONV, find_preset, resolve_arch

__all__ = [
    'PathStats',
    'conv_parameters',
    'conv_layers',
    'count_parameters',
    'enumerate_parameters',
    'depth',
    'receptive_field',
    'path_stats',
    'enumerate_paths',
    'perturbation_impact',
    'compare_to_reported',
]

EXACT_PATH_LIMIT = 30
BRUTE_FORCE_LIMIT = 20


def conv_parameters(in_channels, out_channels, kernel_size=3):
    return out_channels * (in_channels * kernel_size * kernel_size + 1)


def conv_layers(spec):
    """Every convolution of ``spec`` as ``(name, in_channels, out_channels, kernel_size)`` in build order."""
    spec = resolve_arch(spec)
    first = spec.containers[0][0]
    layers = []
    channels = 1
    for i in range(spec.feature_convs):
        layers.append((f"head.{i}", channels, first, 3))
        channels = first
    for ci, (width, count) in enumerate(spec.containers):
        for ui in range(count):
            name = f"body.{ci}.{ui}"
            for j in range(spec.convs_per_unit):
                layers.append((f"{name}.conv{j}", channels if j == 0 else width, width, 3))
            if spec.shortcuts and channels != width:
                layers.append((f"{name}.proj", channels, width, spec.projection_kernel))
            channels = width
    for i in range(spec.reconstruction_convs):
        out_channels = 1 if i == spec.reconstruction_convs - 1 else channels
        layers.append((f"tail.{i}", channels, out_channels, 3))
        channels = out_channels
    return layers


def count_parameters(spec):
    spec = resolve_arch(spec)
    c = spec.convs_per_unit
    first, last = spec.containers[0][0], spec.containers[-1][0]

    total = conv_parameters(1, first) + (spec.feature_convs - 1) * conv_parameters(first, first)
    previous = first
    for width, count in spec.containers:
        total += conv_parameters(previous, width) + (c - 1) * conv_parameters(width, width)
        if spec.shortcuts and previous != width:
            total += conv_parameters(previous, width, spec.projection_kernel)
        total += (count - 1) * c * conv_parameters(width, width)
        if spec.use_bn:
            if spec.relu_position == BEFORE_CONV:
                total += 2 * (previous + (c - 1) * width) + 2 * (count - 1) * c * width
            else:
                total += 2 * count * c * width
        previous = width
    total += (spec.reconstruction_convs - 1) * conv_parameters(last, last) + conv_parameters(last, 1)
    return total


def enumerate_parameters(net):
    """Walk a built network and sum the element counts of its parameter tensors."""
    return sum(array.size for _, array in net.named_parameters())


def depth(spec):
    return resolve_arch(spec).depth


def receptive_field(spec_or_depth):
    """Receptive field of a stack of 3x3 stride-1 convolutions: ``2 * depth + 1``."""
    if isinstance(spec_or_depth, int):
        layers = spec_or_depth
    else:
        layers = depth(spec_or_depth)
    if layers < 0:
        raise UsageError(f"depth must be non-negative, got {layers}")
    return 2 * layers + 1


def _units(spec_or_units):
    if isinstance(spec_or_units, int):
        if spec_or_units < 0:
            raise UsageError(f"unit count must be non-negative, got {spec_or_units}")
        return spec_or_units
    return resolve_arch(spec_or_units).units


@dataclass
class PathStats:
    total_paths: int
    depth_histogram: Dict[int, int] = field(default_factory=dict)
    enumerated: bool = True

    @property
    def units(self):
        return max(self.depth_histogram, default=0)

    def mean_depth(self):
        return Fraction(sum(d * n for d, n in self.depth_histogram.items()), self.total_paths)


def path_stats(spec):
    """
    Count the paths of the unfolded residual body by depth (number of residual
    branches traversed). Up to ``EXACT_PATH_LIMIT`` units the histogram is built
    unit by unit, each unit either skipped or traversed by every path; beyond it
    only the binomial closed form is returned.
    """
    units = _units(spec)
    if units > EXACT_PATH_LIMIT:
        warnings.warn(PathEnumerationWarning(
            f"{units} residual units exceed the exact enumeration limit of {EXACT_PATH_LIMIT}; "
            f"returning the closed form"), category=PathEnumerationWarning)
        return PathStats(2 ** units, {d: math.comb(units, d) for d in range(units + 1)}, enumerated=False)

    counts = [1]
    for _ in range(units):
        counts = [(counts[d] if d < len(counts) else 0) + (counts[d - 1] if d > 0 else 0)
                  for d in range(len(counts) + 1)]
    return PathStats(sum(counts), dict(enumerate(counts)))


def enumerate_paths(spec):
    """Brute-force enumeration of every skip/traverse choice; refuses large bodies."""
    units = _units(spec)
    if units > BRUTE_FORCE_LIMIT:
        raise UsageError(f"refusing to enumerate 2^{units} paths (limit 2^{BRUTE_FORCE_LIMIT})")
    histogram = Counter(sum(path) for path in itertools.product((0, 1), repeat=units))
    return PathStats(2 ** units, dict(sorted(histogram.items())))


def perturbation_impact(spec, container_index):
    """
    Fraction of unfolded paths that traverse at least one residual branch of
    the container at ``container_index``; these are the paths a width change
    there disturbs. Equals ``1 - 2 ** -k`` for a container of ``k`` units.
    """
    spec = resolve_arch(spec)
    if not 0 <= container_index < len(spec.containers):
        raise UsageError(f"container index {container_index} out of range for {len(spec.containers)} containers")
    units = spec.containers[container_index][1]
    return 1 - Fraction(1, 2 ** units)


def compare_to_reported(spec):
    """
    Compare the counted parameters against the figure reported for a known
    architecture. Returns ``(counted, reported, relative_delta)``; ``reported``
    and the delta are None when the architecture has no reported figure.
    """
    spec = resolve_arch(spec)
    counted = count_parameters(spec)
    preset = find_preset(spec)
    if preset is None or preset.reported_parameters is None:
        return counted, None, None
    reported = preset.reported_parameters
    return counted, reported, (counted - reported) / reported

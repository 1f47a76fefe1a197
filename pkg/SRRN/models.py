"""
Architecture notation and the residual super-resolution network.

An architecture is written as a sequence of containers ``N_k`` (``k``
residual units of width ``N``), optionally followed by ``;``-separated
flags::

    16_3,32_3,64_3
    64_8;plain
    16_2,32_2;cpu=3;relu=after;bn;proj=3;head=2;tail=2

The network is the three-stage stack of feature representation (convolution
and ReLU pairs), nonlinear mapping (residual units) and reconstruction
(convolutions only), with one global skip adding the network input to the
reconstruction output so the stack predicts the high-frequency residual.
"""
import dataclasses
import logging
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import ArchParseError, ConfigurationError, UsageError
from .layers import (
    EVAL, MODES, TRAIN, BnParams, ConvParams, add_backward, add_forward, as_tensor, bn_backward, bn_forward,
    conv2d_backward, conv2d_forward, relu_backward, relu_forward,
)
from .mixins import NamedParametersMixin
from .validators import (
    container_validator, flag_validators, positive_count_validators, run_validators,
)

__all__ = [
    'ArchSpec',
    'ResidualUnit',
    'Network',
    'ForwardCache',
    'Gradients',
    'Preset',
    'parse_arch',
    'format_arch',
    'resolve_arch',
    'build_network',
    'forward',
    'backward',
    'predict',
    'main_presets',
    'PRESETS',
    'find_preset',
]

logger = logging.getLogger(__name__)

CONV, RELU, BN = 'conv', 'relu', 'bn'
BEFORE_CONV, AFTER_CONV = 'before', 'after'

_wrapped = re.compile(r"^\s*R?\(\s*(.*?)\s*\)\s*$", re.S)
_value_flags = ('cpu', 'relu', 'proj', 'head', 'tail')
_bare_flags = ('bn', 'plain')


@dataclass(frozen=True)
class ArchSpec:
    containers: Tuple[Tuple[int, int], ...]
    convs_per_unit: int = 2
    relu_position: str = BEFORE_CONV
    use_bn: bool = False
    shortcuts: bool = True
    feature_convs: int = 2
    reconstruction_convs: int = 2
    projection_kernel: int = 1

    def __post_init__(self):
        try:
            containers = tuple((int(n), int(k)) for n, k in self.containers)
        except (TypeError, ValueError):
            raise ConfigurationError(f"containers must be (filters, units) pairs, got {self.containers!r}") from None
        object.__setattr__(self, 'containers', containers)
        self.clean()

    def clean(self):
        if not self.containers:
            raise ConfigurationError('an architecture needs at least one container')
        for i, (n, k) in enumerate(self.containers):
            run_validators(n, positive_count_validators, f"container {i} filter count")
            run_validators(k, positive_count_validators, f"container {i} unit count")
        if self.convs_per_unit not in (2, 3):
            raise ConfigurationError(f"convs_per_unit must be 2 or 3, got {self.convs_per_unit}")
        if self.relu_position not in (BEFORE_CONV, AFTER_CONV):
            raise ConfigurationError(f"relu_position must be '{BEFORE_CONV}' or '{AFTER_CONV}', got {self.relu_position!r}")
        if self.projection_kernel not in (1, 3):
            raise ConfigurationError(f"projection_kernel must be 1 or 3, got {self.projection_kernel}")
        run_validators(self.feature_convs, positive_count_validators, 'feature_convs')
        run_validators(self.reconstruction_convs, positive_count_validators, 'reconstruction_convs')

    @property
    def units(self):
        return sum(k for _, k in self.containers)

    @property
    def depth(self):
        return self.feature_convs + self.units * self.convs_per_unit + self.reconstruction_convs

    @property
    def widths(self):
        return [n for n, _ in self.containers]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def parse(cls, text):
        return parse_arch(text)

    def __str__(self):
        return format_arch(self)


def _parse_container(token, position):
    if not token:
        raise ArchParseError('empty container', position, token)
    try:
        run_validators(token, (container_validator,), f"container '{token}'")
    except ConfigurationError as e:
        raise ArchParseError(str(e), position, token) from None
    filters, _, units = token.partition('_')
    if int(filters) < 1:
        raise ArchParseError(f"filter count must be at least 1 in '{token}'", position, token)
    if units and int(units) < 1:
        raise ArchParseError(f"unit count must be at least 1 in '{token}'", position + len(filters) + 1, token)
    return int(filters), int(units) if units else 1


def _parse_flag(token, position, options):
    key, eq, value = token.partition('=')
    key = key.strip()
    if key in options or (key == 'plain' and 'shortcuts' in options) or (key == 'bn' and 'use_bn' in options):
        raise ArchParseError(f"flag '{key}' given twice", position, token)
    if key in _bare_flags:
        if eq:
            raise ArchParseError(f"flag '{key}' takes no value", position, token)
        if key == 'bn':
            options['use_bn'] = True
        else:
            options['shortcuts'] = False
        return
    if key not in _value_flags or not eq:
        raise ArchParseError(f"unknown flag '{token}'", position, token)
    value = value.strip()
    try:
        run_validators(value, (flag_validators[key],), f"flag '{key}'")
    except ConfigurationError as e:
        raise ArchParseError(str(e), position, token) from None
    options[key] = value if key == 'relu' else int(value)


def parse_arch(text):
    """
    Parse container notation into an ``ArchSpec``.

    Accepts the bare sequence (``16_3,32_3,64_3``) or the written form
    ``R(16_3,32_3,64_3)``; a missing unit count means one unit. Errors carry
    the 0-based character position of the offending token.
    """
    if not isinstance(text, str):
        raise ArchParseError(f"architecture must be a string, got {type(text).__name__}")
    offset, body = 0, text
    match = _wrapped.match(text)
    if match:
        offset, body = match.start(1), match.group(1)

    sections = body.split(';')
    containers = []
    position = offset
    for raw in sections[0].split(','):
        token = raw.strip()
        containers.append(_parse_container(token, position + len(raw) - len(raw.lstrip())))
        position += len(raw) + 1

    options = {}
    position = offset + len(sections[0]) + 1
    for raw in sections[1:]:
        token = raw.strip()
        _parse_flag(token, position + len(raw) - len(raw.lstrip()), options)
        position += len(raw) + 1

    renamed = {'cpu': 'convs_per_unit', 'relu': 'relu_position', 'proj': 'projection_kernel', 'head': 'feature_convs',
               'tail': 'reconstruction_convs'}
    options = {renamed.get(key, key): value for key, value in options.items()}
    return ArchSpec(containers=tuple(containers), **options)


def format_arch(spec):
    parts = [','.join(f"{n}_{k}" if k != 1 else str(n) for n, k in spec.containers)]
    if spec.convs_per_unit != 2:
        parts.append(f"cpu={spec.convs_per_unit}")
    if spec.relu_position != BEFORE_CONV:
        parts.append(f"relu={spec.relu_position}")
    if spec.use_bn:
        parts.append('bn')
    if not spec.shortcuts:
        parts.append('plain')
    if spec.projection_kernel != 1:
        parts.append(f"proj={spec.projection_kernel}")
    if spec.feature_convs != 2:
        parts.append(f"head={spec.feature_convs}")
    if spec.reconstruction_convs != 2:
        parts.append(f"tail={spec.reconstruction_convs}")
    return ';'.join(parts)


@dataclass(frozen=True)
class Preset:
    name: str
    arch: str
    reported_parameters: Optional[int] = None
    reported_depth: Optional[int] = None

    @property
    def spec(self):
        return parse_arch(self.arch)


main_presets = [
    Preset('r-basic', '16_3,32_3,64_3', 322721, 22),
    Preset('srresnet-nb', '16_3,32_3,64_3,128_3,256_3', 4975905, 34),
    Preset('vdsr', '64_8;plain', 664704, 20),
    Preset('r64-8', '64_8', None, 20),
]
PRESETS = {preset.name: preset for preset in main_presets}


def resolve_arch(text):
    """Parse ``text`` as a preset name or as container notation."""
    if isinstance(text, ArchSpec):
        return text
    preset = PRESETS.get(text.strip().lower()) if isinstance(text, str) else None
    return preset.spec if preset is not None else parse_arch(text)


def find_preset(spec):
    canonical = format_arch(spec)
    for preset in main_presets:
        if format_arch(preset.spec) == canonical:
            return preset
    return None


@dataclass(eq=False)
class ResidualUnit:
    name: str
    branch: List[tuple]
    projection: Optional[ConvParams] = None
    shortcut: bool = True

    def iter_layers(self):
        for kind, params in self.branch:
            if params is not None:
                yield params
        if self.projection is not None:
            yield self.projection


class Network(NamedParametersMixin):
    input_channels = 1
    best_state = None

    def __init__(self, arch, head, units, tail):
        self.arch = arch
        self.head = head
        self.units = units
        self.tail = tail

    def iter_layers(self):
        for _, params in self.head:
            if params is not None:
                yield params
        for unit in self.units:
            yield from unit.iter_layers()
        for _, params in self.tail:
            yield params

    def convolutions(self):
        return [layer for layer in self.iter_layers() if isinstance(layer, ConvParams)]

    @property
    def depth(self):
        return sum(1 for layer in self.convolutions() if not layer.name.endswith('.proj'))

    @property
    def projections(self):
        return [unit.projection for unit in self.units if unit.projection is not None]

    def __repr__(self):
        return f"Network({format_arch(self.arch)!r}, depth={self.depth}, parameters={self.parameter_count})"


def _branch(spec, in_channels, out_channels, rng, name):
    steps = []
    channels = in_channels
    for j in range(spec.convs_per_unit):
        conv = ConvParams.he_normal(channels, out_channels, 3, rng, f"{name}.conv{j}")
        if spec.relu_position == BEFORE_CONV:
            if spec.use_bn:
                steps.append((BN, BnParams.identity(channels, f"{name}.bn{j}")))
            steps += [(RELU, None), (CONV, conv)]
        else:
            steps.append((CONV, conv))
            if spec.use_bn:
                steps.append((BN, BnParams.identity(out_channels, f"{name}.bn{j}")))
            steps.append((RELU, None))
        channels = out_channels
    return steps


def build_network(spec, seed=0):
    """
    Build the network for ``spec`` with He-initialised convolutions.

    Weights are drawn from N(0, 2 / (k * k * in_channels)) in layer order from
    a generator seeded by ``seed``; biases start at zero.
    """
    spec = resolve_arch(spec)
    rng = np.random.default_rng(seed)
    first = spec.containers[0][0]

    head = []
    channels = Network.input_channels
    for i in range(spec.feature_convs):
        head.append((CONV, ConvParams.he_normal(channels, first, 3, rng, f"head.{i}")))
        head.append((RELU, None))
        channels = first

    units = []
    for ci, (width, count) in enumerate(spec.containers):
        for ui in range(count):
            name = f"body.{ci}.{ui}"
            branch = _branch(spec, channels, width, rng, name)
            projection = None
            if spec.shortcuts and channels != width:
                projection = ConvParams.he_normal(channels, width, spec.projection_kernel, rng, f"{name}.proj")
            units.append(ResidualUnit(name, branch, projection, spec.shortcuts))
            channels = width

    tail = []
    for i in range(spec.reconstruction_convs):
        out_channels = Network.input_channels if i == spec.reconstruction_convs - 1 else channels
        tail.append((CONV, ConvParams.he_normal(channels, out_channels, 3, rng, f"tail.{i}")))
        channels = out_channels

    net = Network(spec, head, units, tail)
    logger.debug("built %r with seed %d", net, seed)
    return net


@dataclass(eq=False)
class ForwardCache:
    owner: int
    generation: int
    mode: str
    skip: bool
    head: list = field(default_factory=list)
    units: list = field(default_factory=list)
    tail: list = field(default_factory=list)


class Gradients(dict):
    """Parameter gradients keyed by parameter name, plus the gradient of the network input."""
    input = None


def _run_steps(steps, x, mode, saved):
    for kind, params in steps:
        saved.append(x)
        if kind == CONV:
            x = conv2d_forward(x, params)
        elif kind == RELU:
            x = relu_forward(x)
        else:
            x = bn_forward(x, params, mode)
    return x


def _back_steps(steps, saved, grad, grads, mode):
    for (kind, params), x in zip(reversed(steps), reversed(saved)):
        if kind == CONV:
            grad, grads[f"{params.name}.weight"], grads[f"{params.name}.bias"] = conv2d_backward(x, params, grad)
        elif kind == RELU:
            grad = relu_backward(x, grad)
        else:
            grad, grads[f"{params.name}.gamma"], grads[f"{params.name}.beta"] = bn_backward(x, params, grad, mode)
    return grad


def forward(net, x, mode=TRAIN, skip=True):
    """
    Run ``net`` on a batch of luminance planes ``x`` of shape ``(n, 1, h, w)``.

    Each unit computes ``x + f(theta, x)``, with a projection convolution on
    the shortcut where the width changes. With ``skip`` the network input is
    added to the reconstruction output; without it the stack predicts the
    target directly. Returns ``(output, cache)``.
    """
    x = as_tensor(x, 'network input')
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}, expected one of {MODES}")
    cache = ForwardCache(id(net), net.generation, mode, skip)
    h = _run_steps(net.head, x, mode, cache.head)
    for unit in net.units:
        saved = []
        branch = _run_steps(unit.branch, h, mode, saved)
        if unit.shortcut:
            shortcut = conv2d_forward(h, unit.projection) if unit.projection is not None else h
            out = add_forward(branch, shortcut)
        else:
            out = branch
        cache.units.append((h, saved))
        h = out
    out = _run_steps(net.tail, h, mode, cache.tail)
    if skip:
        out = add_forward(out, x)
    return out, cache


def backward(net, cache, grad_out):
    """Backpropagate ``grad_out`` through the forward pass recorded in ``cache``."""
    net.check_cache(cache)
    if cache.mode != TRAIN:
        raise UsageError('backward() needs the cache of a train-mode forward() call')
    grad_out = as_tensor(grad_out, 'output gradient')
    grads = Gradients()

    if cache.skip:
        grad, grad_input = add_backward(grad_out)
    else:
        grad, grad_input = grad_out, None
    grad = _back_steps(net.tail, cache.tail, grad, grads, cache.mode)
    for unit, (unit_input, saved) in zip(reversed(net.units), reversed(cache.units)):
        if unit.shortcut:
            grad_branch, grad_shortcut = add_backward(grad)
        else:
            grad_branch, grad_shortcut = grad, None
        grad = _back_steps(unit.branch, saved, grad_branch, grads, cache.mode)
        if grad_shortcut is not None:
            if unit.projection is not None:
                grad_shortcut, grads[f"{unit.projection.name}.weight"], grads[f"{unit.projection.name}.bias"] = \
                    conv2d_backward(unit_input, unit.projection, grad_shortcut)
            grad = grad + grad_shortcut
    grad = _back_steps(net.head, cache.head, grad, grads, cache.mode)
    grads.input = grad if grad_input is None else grad + grad_input
    return grads


def predict(net, x, skip=True):
    """Eval-mode forward pass without keeping a cache."""
    out, _ = forward(net, x, EVAL, skip)
    return out

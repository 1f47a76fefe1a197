"""
Checkpoint codec.

Layout, all integers unsigned 32-bit little-endian::

    b"SRRN" | version | len(arch) arch(utf-8) | tensor count
    per tensor: len(name) name(utf-8) | rank | dims... | <f4 data

Tensors follow the network's state order: parameters, then BN buffers.
"""
import contextlib
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .exceptions import CheckpointVersionError, ConfigurationError, DataError, InconsistentCheckpointError, \
    NotACheckpointError, TruncatedCheckpointError
from .models import build_network, format_arch, parse_arch

__all__ = [
    'MAGIC',
    'VERSION',
    'Checkpoint',
    'dumps',
    'loads',
    'save_checkpoint',
    'load_checkpoint',
    'atomic_path',
]

logger = logging.getLogger(__name__)

MAGIC = b'SRRN'
VERSION = 1
_U32 = np.dtype('<u4')
_F32 = np.dtype('<f4')


@contextlib.contextmanager
def atomic_path(path, mode='wb', **kwargs):
    """Write through a temporary file in the target directory, renamed over ``path`` only on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, temp = tempfile.mkstemp(prefix=f".{os.path.basename(path)}.", suffix='.tmp', dir=directory)
    try:
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
        os.replace(temp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(temp)
        raise


@dataclass
class Checkpoint:
    arch: str
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION

    @property
    def spec(self):
        try:
            return parse_arch(self.arch)
        except ConfigurationError as e:
            raise InconsistentCheckpointError(f"stored architecture does not parse: {e}") from None

    @classmethod
    def from_network(cls, net, state=None):
        state = net.state_dict() if state is None else state
        return cls(format_arch(net.arch), {name: np.asarray(array, dtype=np.float32) for name, array in state.items()})

    def to_network(self):
        """Build the stored architecture and load the tensors into it; dims are checked against the build."""
        net = build_network(self.spec)
        net.load_state_dict(self.tensors, error=InconsistentCheckpointError)
        return net


def _u32(value):
    return np.array([value], dtype=_U32).tobytes()


def _text(value):
    data = value.encode('utf-8')
    return _u32(len(data)) + data


def dumps(checkpoint):
    parts = [MAGIC, _u32(checkpoint.version), _text(checkpoint.arch), _u32(len(checkpoint.tensors))]
    for name, array in checkpoint.tensors.items():
        array = np.ascontiguousarray(array, dtype=_F32)
        parts += [_text(name), _u32(array.ndim), np.array(array.shape, dtype=_U32).tobytes(), array.tobytes()]
    return b''.join(parts)


class _Reader:

    def __init__(self, data):
        self.data = memoryview(data)
        self.offset = 0

    def take(self, size, what):
        if self.offset + size > len(self.data):
            raise TruncatedCheckpointError(f"checkpoint ends inside {what} (offset {self.offset}, "
                                           f"need {size} bytes, {len(self.data) - self.offset} left)")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what):
        return int(np.frombuffer(self.take(4, what), dtype=_U32)[0])

    def text(self, what):
        size = self.u32(f"{what} length")
        try:
            return bytes(self.take(size, what)).decode('utf-8')
        except UnicodeDecodeError:
            raise InconsistentCheckpointError(f"{what} is not valid UTF-8") from None

    def array(self, what):
        rank = self.u32(f"{what} rank")
        if rank > 8:
            raise InconsistentCheckpointError(f"{what}: implausible rank {rank}")
        shape = tuple(int(d) for d in np.frombuffer(self.take(4 * rank, f"{what} dims"), dtype=_U32))
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(self.take(4 * count, f"{what} data"), dtype=_F32)
        return data.astype(np.float32).reshape(shape)


def loads(data):
    """Decode checkpoint bytes. The tensors are not yet checked against the architecture."""
    reader = _Reader(data)
    if len(data) < len(MAGIC) or bytes(reader.take(len(MAGIC), 'magic')) != MAGIC:
        raise NotACheckpointError('not a checkpoint: bad magic')
    version = reader.u32('version')
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version} (supported: {VERSION})")
    arch = reader.text('arch string')
    count = reader.u32('tensor count')
    tensors = {}
    for index in range(count):
        name = reader.text(f"tensor {index} name")
        if name in tensors:
            raise InconsistentCheckpointError(f"duplicate tensor '{name}'")
        tensors[name] = reader.array(f"tensor '{name}'")
    if reader.offset != len(reader.data):
        raise InconsistentCheckpointError(f"{len(reader.data) - reader.offset} trailing bytes after the last tensor")
    return Checkpoint(arch, tensors, version)


def save_checkpoint(path, checkpoint):
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.from_network(checkpoint)
    data = dumps(checkpoint)
    with atomic_path(path) as handle:
        handle.write(data)
    logger.debug("wrote %s (%d tensors, %d bytes)", path, len(checkpoint.tensors), len(data))
    return checkpoint


def load_checkpoint(path, validate=True):
    """Read a checkpoint; with ``validate`` the tensor dims are checked against the built architecture."""
    try:
        with open(path, 'rb') as handle:
            data = handle.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e.strerror or e}") from None
    checkpoint = loads(data)
    if validate:
        checkpoint.to_network()
    return checkpoint

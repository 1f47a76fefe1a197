import logging
import os

from .exceptions import ConfigurationError
from .optim import TrainConfig

__all__ = ['read_key_values', 'load_train_config']

logger = logging.getLogger(__name__)


def read_key_values(path):
    """
    Read a flat ``key=value`` file. ``#`` starts a comment, blank lines are
    ignored and a repeated key keeps its last value.
    """
    try:
        with open(path, encoding='utf-8') as handle:
            lines = handle.read().splitlines()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror or e}") from None

    values = {}
    for number, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise ConfigurationError(f"{path}:{number}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def load_train_config(path=None, overrides=None):
    """File values first, then ``overrides`` (CLI flags) on top; ``None`` overrides are ignored."""
    values = {}
    if path is not None:
        values.update(read_key_values(path))
        logger.debug("read %d training settings from %s", len(values), path)
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    source = os.fspath(path) if path is not None else None
    return TrainConfig.from_mapping(values, source=source)

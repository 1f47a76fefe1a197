import functools
import logging
import os

from .exceptions import DivergenceError, SRRNError

logger = logging.getLogger(__name__)


def _remove(paths):
    for path in paths:
        try:
            os.unlink(path)
            logger.debug("removed partial output %s", path)
        except FileNotFoundError:
            pass


def command(name, outputs=None, keep_on_divergence=None):
    """
    Wrap a command's ``handle(self, args)`` so that it returns an exit status.

    ``outputs(args)`` lists the files the command writes. Any of them that did
    not exist before the run is removed again when the command fails, except
    those named by ``keep_on_divergence(args)`` when training diverged.
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(self, args):
            paths = [os.fspath(p) for p in (outputs(args) if outputs else []) if p is not None]
            fresh = [p for p in paths if not os.path.exists(p)]
            try:
                func(self, args)
            except SRRNError as e:
                keep = set()
                if isinstance(e, DivergenceError) and keep_on_divergence is not None:
                    keep = {os.fspath(p) for p in keep_on_divergence(args)}
                _remove(p for p in fresh if p not in keep)
                logger.error("%s: %s", name, e)
                return e.exit_code
            except BaseException:
                _remove(fresh)
                raise
            return 0

        return wrapper

    return decorator

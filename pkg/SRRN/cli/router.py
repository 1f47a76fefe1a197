import argparse
import logging

from ..exceptions import UsageError

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """Argument errors surface as ``UsageError`` (exit status 1) instead of argparse's own exit."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class CommandRouter:
    """Maps sub-command names to command classes and builds the parser for them."""

    def __init__(self):
        self.registry = []

    def register(self, name, command_class):
        if any(existing == name for existing, _ in self.registry):
            raise ValueError(f"command '{name}' registered twice")
        self.registry.append((name, command_class))

    @property
    def commands(self):
        return {name: command_class for name, command_class in self.registry}

    def build_parser(self, prog='srrn', description=None, parents=()):
        parser = ArgumentParser(prog=prog, description=description)
        subparsers = parser.add_subparsers(dest='command', metavar='command')
        subparsers.required = True
        for name, command_class in self.registry:
            command = command_class()
            sub = subparsers.add_parser(name, help=command.help, description=command.help, parents=list(parents))
            command.add_arguments(sub)
            sub.set_defaults(handler=command)
        return parser

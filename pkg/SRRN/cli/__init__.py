import logging
import sys

from .. import docs
from ..exceptions import SRRNError
from . import commands
from .router import ArgumentParser, CommandRouter

__all__ = ['router', 'build_parser', 'main']

logger = logging.getLogger(__name__)

router = CommandRouter()
router.register('train', commands.TrainCommand)
router.register('eval', commands.EvalCommand)
router.register('upscale', commands.UpscaleCommand)
router.register('analyze', commands.AnalyzeCommand)
router.register('shapes-experiment', commands.ShapesExperimentCommand)
router.register('degrade', commands.DegradeCommand)
router.register('experiment', commands.ExperimentCommand)


def common_arguments():
    parser = ArgumentParser(add_help=False)
    parser.add_argument('--seed', type=int, default=None, help='Seed for initialisation, shuffling and splits')
    parser.add_argument('--threads', type=int, default=None, help='Worker threads for data and evaluation')
    parser.add_argument('--config', default=None, help=docs.config_help_text)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='Log debug messages')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Log warnings and errors only')
    return parser


def build_parser():
    return router.build_parser(description=docs.prog_description, parents=(common_arguments(),))


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    logging.captureWarnings(True)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SRRNError as e:
        print(e, file=sys.stderr)
        return e.exit_code
    configure_logging(args)
    return args.handler.run(args)

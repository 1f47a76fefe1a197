import logging
import os
import re
from pathlib import Path

import numpy as np

from .. import docs
from ..analysis import (
    compare_to_reported, conv_layers, count_parameters, enumerate_parameters, path_stats, perturbation_impact,
    receptive_field,
)
from ..config import load_train_config, read_key_values
from ..data import (
    DatasetManifest, bicubic_resize, build_dataset, degrade, from_luminance, list_images, load_luminance, modcrop,
    read_image, rgb_to_ycbcr, split_holdout, synthetic_textures, write_image,
)
from ..decorator import command
from ..exceptions import ConfigurationError, DataError, DivergenceError, UsageError
from ..experiments import (
    compare_architectures, compare_batch_norm, compare_relu_position, compare_residual_learning, compare_scale_training,
    run_shapes, write_rows_csv,
)
from ..metrics import bicubic_baseline, evaluate, format_report, write_report_csv
from ..models import build_network, find_preset, format_arch, predict, resolve_arch
from ..optim import parse_scales, train, write_history_csv
from ..serializers import Checkpoint, load_checkpoint, save_checkpoint
from ..validators import SUPPORTED_SCALES, run_validators, scale_validators

logger = logging.getLogger(__name__)

DEFAULT_HOLDOUT = 0.25


def scales_argument(text):
    try:
        scales = parse_scales(text)
    except ValueError:
        raise ConfigurationError(f"scales: cannot interpret {text!r}") from None
    for scale in scales:
        run_validators(scale, scale_validators, 'scales')
    return scales


def best_path(path):
    path = Path(path)
    return path.with_name(f"{path.stem}.best{path.suffix}")


def history_path(path):
    path = Path(path)
    return path.with_name(f"{path.stem}.history.csv")


def history_stem(label):
    return re.sub(r"[^A-Za-z0-9._-]+", "-", label).strip("-")


def add_training_arguments(parser):
    parser.add_argument('--epochs', type=int, default=None)
    parser.add_argument('--batch-size', dest='batch_size', type=int, default=None)
    parser.add_argument('--lr', dest='base_lr', type=float, default=None, help='Initial learning rate')
    parser.add_argument('--lr-step', dest='lr_step', type=int, default=None,
                        help='Epochs between tenfold learning rate decays')
    parser.add_argument('--momentum', type=float, default=None)
    parser.add_argument('--weight-decay', dest='weight_decay', type=float, default=None)
    parser.add_argument('--clip', dest='clip_tau', type=float, default=None,
                        help='Clipping constant; gradients are bounded by clip / lr')
    parser.add_argument('--patch', dest='patch_size', type=int, default=None)
    parser.add_argument('--scales', type=str, default=None, help=docs.scales_help_text)
    parser.add_argument('--augment', action='store_const', const=True, default=None,
                        help='Random dihedral transforms of every patch pair')
    parser.add_argument('--direct', dest='residual', action='store_const', const=False, default=None,
                        help='Predict the HR image without the global skip')
    parser.add_argument('--val-fraction', dest='val_fraction', type=float, default=None)


def add_data_arguments(parser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--manifest', default=None, help=docs.manifest_help_text)
    source.add_argument('--synthetic', type=int, default=None, metavar='COUNT', help=docs.synthetic_help_text)
    parser.add_argument('--texture-size', dest='texture_size', type=int, default=64)


TRAINING_KEYS = ('epochs', 'batch_size', 'base_lr', 'lr_step', 'momentum', 'weight_decay', 'clip_tau',
                 'patch_size', 'scales', 'augment', 'residual', 'val_fraction', 'seed', 'threads')


def training_config(args):
    overrides = {key: getattr(args, key, None) for key in TRAINING_KEYS}
    if overrides['scales'] is not None:
        overrides['scales'] = scales_argument(overrides['scales'])
    return load_train_config(args.config, overrides)


def configured_keys(args):
    """Training keys set by a flag or by the ``--config`` file; every other key holds its default."""
    keys = {key for key in TRAINING_KEYS if getattr(args, key, None) is not None}
    if args.config is not None:
        keys.update(read_key_values(args.config))
    return keys


def load_data(args, config):
    """Planes and a dataset manifest from ``--manifest`` or ``--synthetic``; returns the adjusted config too."""
    if args.manifest is not None:
        keys = configured_keys(args)
        chosen = lambda key: getattr(config, key) if key in keys else None
        manifest = DatasetManifest.from_file(
            args.manifest, scales=chosen('scales'), patch_size=chosen('patch_size'), augment=chosen('augment'),
            seed=chosen('seed'))
        config = config.replace(scales=manifest.scales, patch_size=manifest.patch_size, augment=manifest.augment)
        return manifest.load_images(), manifest, config
    if args.synthetic is not None:
        planes = synthetic_textures(args.synthetic, args.texture_size, config.seed)
        manifest = DatasetManifest(images=planes, scales=config.scales, patch_size=config.patch_size,
                                   stride=config.patch_size, seed=config.seed, augment=config.augment)
        return planes, manifest, config
    raise UsageError('no training data: pass --manifest or --synthetic')


class BaseCommand:
    help = ''

    def add_arguments(self, parser):
        pass

    def handle(self, args):
        raise NotImplementedError('subclasses of BaseCommand must provide a handle() method')

    def run(self, args):
        return self.handle(args)


class TrainCommand(BaseCommand):
    help = docs.train_help_text

    def add_arguments(self, parser):
        parser.add_argument('--arch', default='r-basic', help=docs.arch_help_text)
        parser.add_argument('--out', required=True, help='Checkpoint to write')
        add_data_arguments(parser)
        add_training_arguments(parser)

    @command('train',
             outputs=lambda args: [args.out, best_path(args.out), history_path(args.out)],
             keep_on_divergence=lambda args: [best_path(args.out), history_path(args.out)])
    def handle(self, args):
        config = training_config(args)
        spec = resolve_arch(args.arch)
        net = build_network(spec, seed=config.seed)
        history = []
        if config.epochs > 0:
            planes, manifest, config = load_data(args, config)
            train_planes, validation = split_holdout(planes, config.val_fraction, config.seed)
            dataset = build_dataset(manifest, images=train_planes, threads=config.threads)
            logger.info("training %s (%d parameters) on %d pairs %s", format_arch(spec), net.parameter_count,
                        len(dataset), dataset.scale_counts())
            try:
                net, history = train(net, dataset, config, validation=validation or None)
            except DivergenceError as e:
                save_checkpoint(best_path(args.out), Checkpoint.from_network(net, e.best_state))
                write_history_csv(e.history, history_path(args.out))
                raise
        save_checkpoint(args.out, net)
        save_checkpoint(best_path(args.out), Checkpoint.from_network(net, net.best_state))
        write_history_csv(history, history_path(args.out))
        print(f"wrote {args.out} ({format_arch(spec)}, {net.parameter_count} parameters, {len(history)} epochs)")


class EvalCommand(BaseCommand):
    help = docs.eval_help_text

    def add_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('images', help='Directory of ground-truth images')
        parser.add_argument('--scales', type=scales_argument, default=SUPPORTED_SCALES, help=docs.scales_help_text)
        parser.add_argument('--shave', type=int, default=None, help='Border width to ignore (default: the scale)')
        parser.add_argument('--name', default=None, help='Dataset name in the report (default: directory name)')
        parser.add_argument('--out', default=None, help='CSV report to write')

    @command('eval', outputs=lambda args: [args.out])
    def handle(self, args):
        net = load_checkpoint(args.checkpoint).to_network()
        paths = list_images(args.images)
        dataset = args.name or Path(args.images).name
        threads = args.threads or 1
        names = [p.name for p in paths]
        report = evaluate(net, paths, args.scales, args.shave, threads, dataset, names)
        baseline = bicubic_baseline(paths, args.scales, args.shave, threads, dataset, names)
        print(format_report([report, baseline]))
        if args.out:
            write_report_csv([report, baseline], args.out)


class UpscaleCommand(BaseCommand):
    help = docs.upscale_help_text

    def add_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('input')
        parser.add_argument('output')
        parser.add_argument('--scale', type=int, required=True)

    @command('upscale', outputs=lambda args: [args.output])
    def handle(self, args):
        run_validators(args.scale, scale_validators, 'scale')
        net = load_checkpoint(args.checkpoint).to_network()
        image = read_image(args.input)
        h, w = image.shape[0] * args.scale, image.shape[1] * args.scale
        if image.ndim == 2:
            up = bicubic_resize(image, h, w)
            result = np.clip(predict(net, up[None, None])[0, 0], 0.0, 1.0)
        else:
            ycbcr = bicubic_resize(rgb_to_ycbcr(image), h, w)
            y = np.clip(predict(net, ycbcr[None, None, :, :, 0])[0, 0], 0.0, 1.0)
            result = from_luminance(y, ycbcr[..., 1], ycbcr[..., 2])
        write_image(args.output, result)
        print(f"wrote {args.output} ({w}x{h})")


def describe(spec):
    spec = resolve_arch(spec)
    preset = find_preset(spec)
    counted, reported, delta = compare_to_reported(spec)
    stats = path_stats(spec)
    lines = [
        f"arch: {format_arch(spec)}" + (f" (preset {preset.name})" if preset else ''),
        f"depth: {spec.depth}",
        f"parameters: {counted} (walked: {enumerate_parameters(build_network(spec))})",
    ]
    if reported is not None:
        lines.append(f"reported parameters: {reported} ({delta:+.2%})")
    lines += [
        f"receptive field: {receptive_field(spec)}x{receptive_field(spec)}",
        f"residual units: {spec.units}, unfolded paths: {stats.total_paths}, "
        f"mean path length: {float(stats.mean_depth()):.2f} units"
        + ('' if stats.enumerated else ' (closed form)'),
        'paths by length: ' + ' '.join(f"{d}:{n}" for d, n in sorted(stats.depth_histogram.items())),
    ]
    for index, (width, units) in enumerate(spec.containers):
        impact = perturbation_impact(spec, index)
        lines.append(f"container {index} ({width} filters x {units} units): "
                     f"perturbs {impact} = {float(impact):.4f} of paths")
    return lines


class AnalyzeCommand(BaseCommand):
    help = docs.analyze_help_text

    def add_arguments(self, parser):
        parser.add_argument('arch', help=docs.arch_help_text)
        parser.add_argument('--compare', default=None, metavar='ARCH', help='Second architecture to compare against')
        parser.add_argument('--layers', action='store_true', help='List every convolution')

    @command('analyze')
    def handle(self, args):
        spec = resolve_arch(args.arch)
        lines = describe(spec)
        if args.layers:
            lines += [f"  {name:<20} {i:>4} -> {o:<4} {k}x{k}" for name, i, o, k in conv_layers(spec)]
        if args.compare:
            other = resolve_arch(args.compare)
            mine, theirs = count_parameters(spec), count_parameters(other)
            lines += [''] + describe(other) + [
                '',
                f"parameters: {mine} vs {theirs}, saving {theirs - mine} ({(theirs - mine) / theirs:.2%})",
            ]
        print('\n'.join(lines))


def experiment_data(args):
    config = training_config(args)
    planes, _, config = load_data(args, config)
    fraction = config.val_fraction or DEFAULT_HOLDOUT
    train_planes, validation = split_holdout(planes, fraction, config.seed)
    if not train_planes or not validation:
        raise DataError('experiments need at least two images to hold one out for validation')
    return train_planes, validation, config


class ShapesExperimentCommand(BaseCommand):
    help = docs.shapes_help_text

    def add_arguments(self, parser):
        parser.add_argument('base_width', type=int, help='Largest width N of the shape families')
        parser.add_argument('--out', required=True, help='CSV to write')
        parser.add_argument('--containers', type=int, default=6)
        parser.add_argument('--units', type=int, default=2, help='Residual units per container')
        parser.add_argument('--plain', action='store_true', help='Drop the per-unit shortcuts')
        add_data_arguments(parser)
        add_training_arguments(parser)

    @command('shapes-experiment', outputs=lambda args: [args.out])
    def handle(self, args):
        train_planes, validation, config = experiment_data(args)
        rows = run_shapes(args.base_width, train_planes, validation, config, args.containers, args.units, args.plain)
        write_rows_csv(rows, args.out, config.scales)
        for row in rows:
            print(f"{row.label:<18} {row.arch:<40} {row.parameters:>9} "
                  + ' '.join(f"x{s} {p:.3f}" for s, p in sorted(row.psnr.items())))


class DegradeCommand(BaseCommand):
    help = docs.degrade_help_text

    def add_arguments(self, parser):
        parser.add_argument('input')
        parser.add_argument('--scale', type=int, required=True)
        parser.add_argument('--out-dir', dest='out_dir', required=True)

    @staticmethod
    def output_paths(args):
        stem = Path(args.input).stem
        return [Path(args.out_dir) / f"{stem}_hr.png",
                Path(args.out_dir) / f"{stem}_x{args.scale}_lr.png",
                Path(args.out_dir) / f"{stem}_x{args.scale}_bicubic.png"]

    @command('degrade', outputs=lambda args: DegradeCommand.output_paths(args))
    def handle(self, args):
        run_validators(args.scale, scale_validators, 'scale')
        hr = load_luminance(args.input)
        if min(hr.shape) < args.scale:
            raise DataError(f"image of {hr.shape[0]}x{hr.shape[1]} is smaller than the scale factor {args.scale}")
        hr = modcrop(hr, args.scale)
        lr = bicubic_resize(hr, hr.shape[0] // args.scale, hr.shape[1] // args.scale)
        os.makedirs(args.out_dir, exist_ok=True)
        for path, plane in zip(self.output_paths(args), (hr, lr, degrade(hr, args.scale))):
            write_image(path, plane)
            print(f"wrote {path}")


EXPERIMENTS = {
    'archs': compare_architectures,
    'residual': compare_residual_learning,
    'relu': compare_relu_position,
    'bn': compare_batch_norm,
    'scales': compare_scale_training,
}


class ExperimentCommand(BaseCommand):
    help = docs.experiment_help_text

    def add_arguments(self, parser):
        parser.add_argument('name', choices=sorted(EXPERIMENTS))
        parser.add_argument('--arch', default='r-basic', help=docs.arch_help_text)
        parser.add_argument('--against', action='append', default=[], metavar='ARCH',
                            help='Architecture to compare --arch with (archs only; repeatable)')
        parser.add_argument('--out', required=True, help='CSV to write')
        parser.add_argument('--histories', default=None, metavar='DIR',
                            help='Also write the per-epoch history of every run to DIR/<label>.history.csv')
        add_data_arguments(parser)
        add_training_arguments(parser)

    @command('experiment', outputs=lambda args: [args.out])
    def handle(self, args):
        if args.against and args.name != 'archs':
            raise UsageError('--against only applies to the archs experiment')
        options = {'others': [resolve_arch(arch) for arch in args.against]} if args.name == 'archs' else {}
        spec = resolve_arch(args.arch)
        train_planes, validation, config = experiment_data(args)
        rows = EXPERIMENTS[args.name](spec, train_planes, validation, config, **options)
        write_rows_csv(rows, args.out, config.scales)
        if args.histories:
            os.makedirs(args.histories, exist_ok=True)
            for row in rows:
                if row.history:
                    write_history_csv(row.history, Path(args.histories) / f"{history_stem(row.label)}.history.csv")
        for row in rows:
            speed = '' if row.epochs_to_threshold is None else f" reached threshold at epoch {row.epochs_to_threshold}"
            print(f"{row.label:<14} " + ' '.join(f"x{s} {p:.3f}" for s, p in sorted(row.psnr.items())) + speed)

import argparse
import csv
import logging

import numpy as np
import pytest

from SRRN.cli import main
from SRRN.cli.commands import TRAINING_KEYS, load_data, training_config
from SRRN.data import read_image, write_image
from SRRN.experiments import SHAPE_FAMILIES
from SRRN.models import build_network
from SRRN.serializers import save_checkpoint


@pytest.fixture
def zero_checkpoint(tmp_path):
    path = tmp_path / 'zero.srrn'
    save_checkpoint(path, build_network('8_2').zero_())
    return path


@pytest.mark.parametrize('arch, depth', [('r-basic', 22), ('srresnet-nb', 34), ('vdsr', 20)])
def test_analyze_reports_depth(capsys, arch, depth):
    assert main(['analyze', arch]) == 0
    assert f"depth: {depth}" in capsys.readouterr().out


def test_analyze_counts_parameters(capsys):
    assert main(['analyze', '16_3,32_3,64_3', '--compare', 'srresnet-nb']) == 0
    out = capsys.readouterr().out
    assert 'parameters: 310577' in out and 'reported parameters: 322721' in out


def test_analyze_bad_notation_is_a_usage_error(caplog):
    with caplog.at_level(logging.ERROR):
        assert main(['analyze', '16_3,x']) == 1
    assert 'at position 5' in caplog.text


def test_missing_command():
    assert main([]) == 1


def test_unknown_option():
    assert main(['analyze', '8_2', '--frobnicate']) == 1


def test_train_zero_epochs_is_reproducible(tmp_path, capsys):
    first, second = tmp_path / 'a.srrn', tmp_path / 'b.srrn'
    assert main(['train', '--arch', '8_2', '--epochs', '0', '--seed', '2', '--out', str(first)]) == 0
    assert main(['train', '--arch', '8_2', '--epochs', '0', '--seed', '2', '--out', str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / 'a.best.srrn').read_bytes() == first.read_bytes()
    assert (tmp_path / 'a.history.csv').read_text().splitlines() == [
        'epoch,lr,mean_train_loss,val_psnr_x2,val_psnr_x3,val_psnr_x4']
    assert 'wrote' in capsys.readouterr().out


def test_train_on_synthetic_textures(tmp_path):
    out = tmp_path / 'net.srrn'
    status = main(['train', '--arch', '4_1', '--synthetic', '2', '--texture-size', '32', '--patch', '17',
                   '--epochs', '2', '--batch-size', '4', '--scales', '2', '--out', str(out)])
    assert status == 0
    rows = list(csv.reader((tmp_path / 'net.history.csv').open()))
    assert [row[0] for row in rows[1:]] == ['0', '1']


def test_train_without_data_source(tmp_path):
    out = tmp_path / 'net.srrn'
    assert main(['train', '--arch', '4_1', '--epochs', '1', '--out', str(out)]) == 1
    assert not out.exists()


def test_unknown_config_key(tmp_path, caplog):
    config = tmp_path / 'train.cfg'
    config.write_text('epochs = 0\nwarmup = 3\n')
    out = tmp_path / 'net.srrn'
    with caplog.at_level(logging.ERROR):
        assert main(['train', '--arch', '8_2', '--config', str(config), '--out', str(out)]) == 1
    assert 'warmup' in caplog.text
    assert not out.exists()


def test_eval_missing_checkpoint(tmp_path, image_dir):
    report = tmp_path / 'report.csv'
    assert main(['eval', str(tmp_path / 'absent.srrn'), str(image_dir), '--out', str(report)]) == 2
    assert not report.exists()


def test_eval_zero_network_equals_bicubic(tmp_path, zero_checkpoint, image_dir, capsys):
    report = tmp_path / 'report.csv'
    assert main(['eval', str(zero_checkpoint), str(image_dir), '--scales', '2,3', '--out', str(report)]) == 0
    rows = list(csv.DictReader(report.open()))
    assert [(r['scale'], r['method']) for r in rows] == [('2', 'model'), ('3', 'model'), ('2', 'bicubic'),
                                                          ('3', 'bicubic')]
    assert rows[0]['psnr'] == rows[2]['psnr'] and rows[1]['ssim'] == rows[3]['ssim']
    assert rows[0]['dataset'] == 'images' and rows[0]['images'] == '3'
    assert 'bicubic' in capsys.readouterr().out


def test_eval_unsupported_scale(zero_checkpoint, image_dir):
    assert main(['eval', str(zero_checkpoint), str(image_dir), '--scales', '5']) == 1


def test_upscale_gray_image(tmp_path, zero_checkpoint, rng):
    source, target = tmp_path / 'small.pgm', tmp_path / 'big.png'
    write_image(source, rng.uniform(size=(10, 12)))
    assert main(['upscale', str(zero_checkpoint), str(source), str(target), '--scale', '3']) == 0
    assert read_image(target).shape == (30, 36)


def test_upscale_colour_image(tmp_path, zero_checkpoint, rng):
    source, target = tmp_path / 'small.png', tmp_path / 'big.png'
    write_image(source, rng.uniform(size=(6, 5, 3)))
    assert main(['upscale', str(zero_checkpoint), str(source), str(target), '--scale', '2']) == 0
    assert read_image(target).shape == (12, 10, 3)


def test_upscale_unsupported_scale(tmp_path, zero_checkpoint, rng):
    source, target = tmp_path / 'small.png', tmp_path / 'big.png'
    write_image(source, rng.uniform(size=(10, 12)))
    assert main(['upscale', str(zero_checkpoint), str(source), str(target), '--scale', '5']) == 1
    assert not target.exists()


def test_degrade_writes_three_images(tmp_path, rng):
    source = tmp_path / 'photo.png'
    write_image(source, rng.uniform(size=(13, 14)))
    out_dir = tmp_path / 'out'
    assert main(['degrade', str(source), '--scale', '3', '--out-dir', str(out_dir)]) == 0
    assert read_image(out_dir / 'photo_hr.png').shape == (12, 12)
    assert read_image(out_dir / 'photo_x3_lr.png').shape == (4, 4)
    assert read_image(out_dir / 'photo_x3_bicubic.png').shape == (12, 12)


def test_experiment_needs_two_images(tmp_path):
    out = tmp_path / 'rows.csv'
    assert main(['experiment', 'bn', '--arch', '4_1', '--synthetic', '1', '--texture-size', '32', '--patch', '17',
                 '--epochs', '1', '--out', str(out)]) == 2
    assert not out.exists()


def test_experiment_name_is_checked(tmp_path):
    assert main(['experiment', 'dropout', '--out', str(tmp_path / 'x.csv')]) == 1


def test_zero_network_checkpoint_is_all_zero(zero_checkpoint):
    from SRRN.serializers import load_checkpoint

    assert all(not np.any(array) for name, array in load_checkpoint(zero_checkpoint).tensors.items()
               if not name.endswith('num_batches'))


@pytest.mark.parametrize('colour', [(51, 153, 204), (128,)])
def test_upscale_keeps_a_constant_colour(tmp_path, zero_checkpoint, colour):
    source, target = tmp_path / 'flat.png', tmp_path / 'big.png'
    level = np.array(colour) / 255
    write_image(source, np.squeeze(np.tile(level, (8, 10, 1))))
    assert main(['upscale', str(zero_checkpoint), str(source), str(target), '--scale', '2']) == 0
    result = read_image(target)
    assert result.shape == np.squeeze(np.tile(level, (16, 20, 1))).shape
    np.testing.assert_allclose(result, np.squeeze(np.tile(level, (16, 20, 1))), atol=1 / 255 + 1e-6)


def test_shapes_experiment_writes_one_row_per_family(tmp_path):
    out = tmp_path / 'shapes.csv'
    assert main(['shapes-experiment', '8', '--synthetic', '2', '--texture-size', '32', '--patch', '17',
                 '--epochs', '1', '--batch-size', '8', '--scales', '2', '--containers', '2', '--units', '1',
                 '--out', str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [row['label'] for row in rows] == list(SHAPE_FAMILIES)
    assert len({row['depth'] for row in rows}) == 1


def test_archs_experiment_writes_histories(tmp_path):
    out, histories = tmp_path / 'archs.csv', tmp_path / 'histories'
    assert main(['experiment', 'archs', '--arch', '4_1', '--against', '4_1;plain', '--synthetic', '2',
                 '--texture-size', '32', '--patch', '17', '--epochs', '1', '--scales', '2',
                 '--histories', str(histories), '--out', str(out)]) == 0
    assert [row['label'] for row in csv.DictReader(out.open())] == ['4', '4;plain']
    written = sorted(path.name for path in histories.iterdir())
    assert written == ['4-plain.history.csv', '4.history.csv']
    rows = list(csv.DictReader((histories / '4.history.csv').open()))
    assert len(rows) == 1 and rows[0]['val_psnr_x2']


def test_against_needs_the_archs_experiment(tmp_path):
    out = tmp_path / 'rows.csv'
    assert main(['experiment', 'bn', '--arch', '4_1', '--against', 'vdsr', '--synthetic', '2',
                 '--texture-size', '32', '--patch', '17', '--epochs', '1', '--out', str(out)]) == 1
    assert not out.exists()


def data_args(**values):
    args = argparse.Namespace(config=None, manifest=None, synthetic=None, texture_size=64)
    for key in TRAINING_KEYS:
        setattr(args, key, None)
    for key, value in values.items():
        setattr(args, key, value)
    return args


def test_config_file_settings_reach_the_manifest(tmp_path, image_dir):
    manifest = tmp_path / 'data.manifest'
    manifest.write_text(f"images = {image_dir.name}\npatch = 33\nscales = 2,3,4\n")
    config = tmp_path / 'train.cfg'
    config.write_text('patch_size = 17\nscales = 3\n')

    args = data_args(manifest=str(manifest))
    _, loaded, settings = load_data(args, training_config(args))
    assert (loaded.patch_size, loaded.scales) == (33, (2, 3, 4))

    args = data_args(manifest=str(manifest), config=str(config))
    _, loaded, settings = load_data(args, training_config(args))
    assert (loaded.patch_size, loaded.scales) == (17, (3,))
    assert (settings.patch_size, settings.scales) == (17, (3,))

    args = data_args(manifest=str(manifest), config=str(config), patch_size=21)
    _, loaded, settings = load_data(args, training_config(args))
    assert loaded.patch_size == settings.patch_size == 21

import math

import numpy as np
import pytest

from SRRN.analysis import count_parameters
from SRRN.data import DatasetManifest, build_dataset
from SRRN.exceptions import ConfigurationError
from SRRN.experiments import (
    SHAPE_FAMILIES, ExperimentRow, compare_architectures, compare_batch_norm, compare_residual_learning, run_shapes,
    shape_families, shape_widths, write_rows_csv, zero_residual_loss,
)
from SRRN.optim import TrainConfig


def test_shape_widths():
    assert shape_widths('increase', 16) == [4, 6, 9, 11, 14, 16]
    assert shape_widths('decrease', 16) == [16, 14, 11, 9, 6, 4]
    assert shape_widths('increase-decrease', 16) == [4, 10, 16, 16, 10, 4]
    assert shape_widths('decrease-increase', 16) == [16, 10, 4, 4, 10, 16]
    assert shape_widths('baseline', 16) == [16] * 6


def test_shape_families_share_depth():
    families = shape_families(16)
    assert list(families) == list(SHAPE_FAMILIES)
    assert {spec.depth for spec in families.values()} == {28}
    counts = {name: count_parameters(spec) for name, spec in families.items()}
    assert max(counts, key=counts.get) == 'baseline'
    widths = families['increase'].widths
    assert widths == sorted(widths)


def test_plain_families_drop_shortcuts():
    assert not any(spec.shortcuts for spec in shape_families(8, plain=True).values())


def test_base_width_too_small():
    with pytest.raises(ConfigurationError):
        shape_families(6)
    with pytest.raises(ConfigurationError):
        shape_widths('zigzag', 16)


def test_zero_residual_loss(textures):
    dataset = build_dataset(DatasetManifest(textures[:2], scales=(2,), patch_size=17, stride=15))
    expected = np.mean((dataset.hr.astype(np.float64) - dataset.lr) ** 2) / 2 * dataset.hr[0].size
    assert zero_residual_loss(dataset) == pytest.approx(expected, rel=1e-5)


def test_rows_csv(tmp_path):
    rows = [ExperimentRow('bn', '8_2;bn', 1234, 8, 0.5, {2: 30.0}, {2: 0.9}, 3),
            ExperimentRow('bicubic', '', 0, 0, float('nan'), {2: 28.0}, {2: 0.85})]
    write_rows_csv(rows, tmp_path / 'rows.csv', scales=(2,))
    lines = (tmp_path / 'rows.csv').read_text().splitlines()
    assert lines[0] == 'label,arch,parameters,depth,final_loss,epochs_to_threshold,psnr_x2,ssim_x2'
    assert lines[1] == 'bn,8_2;bn,1234,8,0.5,3,30.0000,0.9000'
    assert lines[2] == 'bicubic,,0,0,,,28.0000,0.8500'


def small_config(**changes):
    values = dict(epochs=2, batch_size=8, patch_size=17, scales=(2,), lr_step=100)
    values.update(changes)
    return TrainConfig(**values)


@pytest.mark.slow
def test_batch_norm_comparison(textures):
    rows = compare_batch_norm('4_1,8_1', textures[:3], textures[3:], small_config())
    assert [row.label for row in rows] == ['no-bn', 'bn']
    assert all(math.isfinite(row.psnr[2]) for row in rows)


@pytest.mark.slow
def test_run_shapes_gives_one_row_per_family(textures):
    rows = run_shapes(8, textures[:3], textures[3:], small_config(epochs=1), containers=4, units=1)
    assert [row.label for row in rows] == list(SHAPE_FAMILIES)
    assert len({row.depth for row in rows}) == 1


@pytest.mark.slow
def test_residual_learning_converges_sooner(textures):
    rows = compare_residual_learning('8_2', textures[:4], textures[:1],
                                     small_config(epochs=10, batch_size=16, weight_decay=0.0))
    residual, direct = (math.inf if row.epochs_to_threshold is None else row.epochs_to_threshold for row in rows)
    assert residual < direct


def test_multiscale_checkpoint_scores_every_scale(textures):
    from SRRN.metrics import evaluate
    from SRRN.models import build_network
    from SRRN.optim import train

    dataset = build_dataset(DatasetManifest(textures[:2], scales=(2, 3, 4), patch_size=17, stride=15))
    assert set(dataset.scale_counts()) == {2, 3, 4}
    net, _ = train(build_network('4_1', seed=1), dataset, small_config(epochs=1, scales=(2, 3, 4)))
    report = evaluate(net, textures[2:], (2, 3, 4))
    assert report.scales == [2, 3, 4]
    assert all(len(report.rows_for(s)) == 2 for s in (2, 3, 4))
    assert all(math.isfinite(row.psnr) for row in report.rows)


@pytest.mark.slow
def test_small_network_beats_bicubic():
    from SRRN.data import split_holdout, synthetic_textures
    from SRRN.metrics import bicubic_baseline
    from SRRN.experiments import train_and_score

    train_images, held_out = split_holdout(synthetic_textures(20, 48, seed=3), 0.2, seed=3)
    config = small_config(epochs=40, batch_size=16, lr_step=30)
    row = train_and_score('gain', '8_2,16_2', train_images, held_out, config)
    assert row.psnr[2] - bicubic_baseline(held_out, (2,)).mean(2)[0] >= 0.3


def test_architecture_comparison_tracks_validation(textures):
    rows = compare_architectures('4_1', textures[:2], textures[2:3], small_config(epochs=1), others=['4_1;plain'])
    assert [row.label for row in rows] == ['4', '4;plain']
    assert all(record.val_psnr.keys() == {2} for row in rows for record in row.history)
    assert rows[0].parameters == rows[1].parameters


def test_architecture_comparison_labels_presets(textures):
    from SRRN.experiments import arch_label
    from SRRN.models import resolve_arch

    assert arch_label(resolve_arch('vdsr')) == 'vdsr'
    assert arch_label(resolve_arch('8_2,16_1')) == '8_2,16'


@pytest.mark.parametrize('others', [(), ('4_1',), ('R(4_1)',)])
def test_architecture_comparison_needs_distinct_architectures(textures, others):
    with pytest.raises(ConfigurationError):
        compare_architectures('4_1', textures[:2], textures[2:3], small_config(epochs=1), others=others)


@pytest.mark.slow
def test_shortcuts_against_plain_at_equal_depth(textures):
    rows = compare_architectures('16_4', textures[:3], textures[3:], small_config(epochs=3), others=['16_4;plain'])
    assert rows[0].depth == rows[1].depth
    assert all(math.isfinite(row.psnr[2]) for row in rows)

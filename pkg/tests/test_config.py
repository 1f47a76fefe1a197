import pytest

from SRRN.config import load_train_config, read_key_values
from SRRN.exceptions import ConfigKeyError, ConfigurationError


def test_read_key_values(tmp_path):
    path = tmp_path / 'train.cfg'
    path.write_text('# schedule\nbase_lr = 0.05  # smaller\n\nepochs=4\nepochs = 5\n')
    assert read_key_values(path) == {'base_lr': '0.05', 'epochs': '5'}


def test_malformed_line_names_the_line(tmp_path):
    path = tmp_path / 'train.cfg'
    path.write_text('epochs = 2\nmomentum\n')
    with pytest.raises(ConfigurationError, match='train.cfg:2'):
        read_key_values(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        read_key_values(tmp_path / 'absent.cfg')


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / 'train.cfg'
    path.write_text('epochs = 7\nbatch_size = 8\n')
    config = load_train_config(path, {'epochs': 2, 'batch_size': None})
    assert (config.epochs, config.batch_size) == (2, 8)


def test_defaults_without_file():
    assert load_train_config().epochs == 60


def test_unknown_key_names_key_and_file(tmp_path):
    path = tmp_path / 'train.cfg'
    path.write_text('warmup = 3\n')
    with pytest.raises(ConfigKeyError) as info:
        load_train_config(path)
    assert 'warmup' in str(info.value) and 'train.cfg' in str(info.value)
    assert info.value.exit_code == 1

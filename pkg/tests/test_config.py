from dataclasses import replace

import pytest

from config import settings
from config.experiment import ExperimentConfig, format_config, parse_config, parse_config_text
from utils.errors import ConfigurationError, ParseError


def test_empty_file_gives_defaults_and_echoes_them(write_config, capsys):
    cfg = parse_config(write_config(''))
    assert cfg == ExperimentConfig()
    assert cfg.gamma == settings.GAMMA and cfg.penalty == settings.PENALTY
    out = capsys.readouterr().out
    assert out.startswith('# Defaults applied for')
    assert 'gamma = 0.9' in out
    assert '[distance]' in out


def test_partial_file_reports_only_missing_keys():
    cfg, defaulted = parse_config_text('[policy]\ngamma = 0.5\n\n[training]\nepochs = 3\n')
    assert cfg.gamma == 0.5 and cfg.epochs == 3
    assert 'gamma' not in defaulted and 'epochs' not in defaulted
    assert 'penalty' in defaulted


def test_format_then_parse_is_identity(small_cfg):
    cfg = replace(small_cfg, mode='disentangle_only', baseline=True, rollouts=3, gamma=1.0 / 3.0)
    parsed, defaulted = parse_config_text(format_config(cfg))
    assert parsed == cfg
    assert defaulted == []


def test_out_of_range_value_names_key_and_line():
    text = '[data]\ngenerator = gaussians\n\n[policy]\npenalty = -10\ngamma = 1.5\n'
    with pytest.raises(ParseError) as excinfo:
        parse_config_text(text)
    assert excinfo.value.line == 6
    assert excinfo.value.key == 'gamma'
    assert 'gamma' in str(excinfo.value) and '[0, 1)' in str(excinfo.value)


@pytest.mark.parametrize('text, line, key', [
    ('[training]\nepochs = 3\nlearning_speed = 2\n', 3, 'learning_speed'),
    ('[training]\nepochs = many\n', 2, 'epochs'),
    ('[output]\nprogress = perhaps\n', 2, 'progress'),
    ('[network]\nfeature_hidden = 8, x\n', 2, 'feature_hidden'),
    ('[policy]\nepochs = 3\n', 2, 'epochs'),
])
def test_bad_keys_and_types(text, line, key):
    with pytest.raises(ParseError) as excinfo:
        parse_config_text(text)
    assert excinfo.value.line == line
    assert excinfo.value.key == key


def test_unknown_section_and_malformed_line():
    with pytest.raises(ParseError) as excinfo:
        parse_config_text('[data]\n\n[extras]\nx = 1\n')
    assert excinfo.value.line == 3
    with pytest.raises(ParseError):
        parse_config_text('epochs = 3\n')


def test_exact_distance_limits_rows():
    with pytest.raises(ParseError) as excinfo:
        parse_config_text('[distance]\nmethod = exact\n')
    assert excinfo.value.key == 'distance_rows'
    cfg, _ = parse_config_text('[distance]\nmethod = exact\ndistance_rows = 32\n')
    assert cfg.distance_rows == 32


def test_validate_raises_configuration_error():
    with pytest.raises(ConfigurationError, match='batch_size'):
        ExperimentConfig(batch_size=1).validate()
    with pytest.raises(ConfigurationError, match='csv_path'):
        ExperimentConfig(generator='csv').validate()
    assert ExperimentConfig().validate() == ExperimentConfig()


@pytest.mark.parametrize('field, value', [
    ('penalty', 5.0), ('penalty_scale', 0.0), ('adapt_steps', -1), ('adapt_keep', 0.0), ('adapt_keep', 1.2),
])
def test_penalty_and_adaptation_bounds(field, value):
    with pytest.raises(ConfigurationError, match=field):
        ExperimentConfig(**{field: value}).validate()

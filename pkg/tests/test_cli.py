import xml.etree.ElementTree as ET
from dataclasses import replace

import pandas as pd
import pytest

from core.checkpoint import TrainedModel, save_checkpoint
from core.disentangle import build_model
from core.trainer import network_dims
from main import main, parse_arguments
from strategies.fixed import constant_policy


def _run(argv, capsys):
    code = main(argv + ['--log-file', ''])
    return code, capsys.readouterr().out.strip().splitlines()


def _value(lines, key):
    return next(line for line in lines if line.startswith(f'{key} = '))


def test_parse_arguments_defaults():
    args = parse_arguments(['pool-sweep'])
    assert args.command == 'pool-sweep'
    assert args.pool_sizes == [3, 6, 9]
    assert args.config is None and args.seed is None


def test_generate_writes_every_domain(small_cfg, write_config, tmp_path, capsys):
    cfg = replace(small_cfg, angles=[float(a) for a in range(0, 181, 18)], n_per_domain=5)
    out = tmp_path / 'generated'
    code, lines = _run(['generate', '--config', write_config(cfg), '--out', str(out)], capsys)
    assert code == 0
    frame = pd.read_csv(lines[-1])
    assert frame['domain_id'].nunique() == 11


def test_train_then_eval_agree(small_cfg, write_config, tmp_path, capsys):
    config = write_config(small_cfg)
    out = str(tmp_path / 'run')
    code, trained = _run(['train', '--config', config, '--out', out], capsys)
    assert code == 0
    assert (tmp_path / 'run' / 'history.jsonl').exists()
    assert (tmp_path / 'run' / 'model.ckpt').exists()

    code, evaluated = _run(['eval', '--config', config, '--out', out], capsys)
    assert code == 0
    assert _value(trained, 'target_accuracy') == _value(evaluated, 'target_accuracy')


def test_train_from_generated_csv(small_cfg, write_config, tmp_path, capsys):
    config = write_config(replace(small_cfg, epochs=1))
    out = str(tmp_path / 'csv-run')
    _run(['generate', '--config', config, '--out', out], capsys)
    code, lines = _run(['train', '--config', config, '--out', out, '--domains', f'{out}/domains.csv'], capsys)
    assert code == 0
    assert 0.0 <= float(_value(lines, 'target_accuracy').split(' = ')[1]) <= 1.0


def test_path_on_always_select_checkpoint(small_cfg, write_config, tmp_path, capsys):
    model = build_model(2, 2, network_dims(small_cfg), seed=0)
    trained = TrainedModel(model.feature, model.invariant, model.specific, model.classifier,
                           constant_policy(3 * small_cfg.specific_dim, bias=20.0))
    checkpoint = save_checkpoint(trained, str(tmp_path / 'always.ckpt'))
    code, lines = _run(['path', '--config', write_config(small_cfg), '--checkpoint', checkpoint], capsys)
    assert code == 0
    assert lines[-1] == '30,60'


def _svg(path):
    with open(path, 'rb') as f:
        data = f.read()
    assert b'<!DOCTYPE' not in data
    return data, ET.fromstring(data)


def _gids(root, prefix):
    return [el.get('id') for el in root.iter() if (el.get('id') or '').startswith(prefix)]


def test_plots_are_well_formed_and_reproducible(small_cfg, write_config, tmp_path, capsys):
    config = write_config(small_cfg)
    for run in ('first', 'second'):
        _run(['train', '--config', config, '--out', str(tmp_path / run)], capsys)
    out = str(tmp_path / 'plots')
    histories = [str(tmp_path / run / 'history.jsonl') for run in ('first', 'second')]

    assert _run(['plot-selection', '--config', config, '--out', out, '--history', histories[0]], capsys)[0] == 0
    data, root = _svg(tmp_path / 'plots' / 'selection.svg')
    assert len(set(_gids(root, 'cell-'))) == 2 * small_cfg.epochs
    _run(['plot-selection', '--config', config, '--out', out, '--history', histories[0]], capsys)
    assert _svg(tmp_path / 'plots' / 'selection.svg')[0] == data

    assert _run(['plot-reward', '--config', config, '--out', out, '--history', *histories], capsys)[0] == 0
    data, root = _svg(tmp_path / 'plots' / 'reward.svg')
    assert set(_gids(root, 'reward-')) == {'reward-first', 'reward-second'}
    _run(['plot-reward', '--config', config, '--out', out, '--history', *histories], capsys)
    assert _svg(tmp_path / 'plots' / 'reward.svg')[0] == data


def test_plot_features(small_cfg, write_config, tmp_path, capsys):
    config = write_config(replace(small_cfg, epochs=1))
    out = str(tmp_path / 'run')
    _run(['train', '--config', config, '--out', out], capsys)
    assert _run(['plot-features', '--config', config, '--out', out], capsys)[0] == 0
    _, root = _svg(tmp_path / 'run' / 'features.svg')
    assert len(set(_gids(root, 'features-'))) == 2 * len(small_cfg.angles)


def test_failures_return_one(small_cfg, write_config, tmp_path, capsys):
    config = write_config(small_cfg)
    code, _ = _run(['eval', '--config', config, '--checkpoint', str(tmp_path / 'missing.ckpt')], capsys)
    assert code == 1
    bad = write_config('[policy]\ngamma = 1.5\n', name='bad.ini')
    code, _ = _run(['train', '--config', bad], capsys)
    assert code == 1


@pytest.mark.slow
def test_ablation_and_pool_sweep_write_tables(small_cfg, write_config, tmp_path, capsys):
    config = write_config(replace(small_cfg, epochs=1))
    out = tmp_path / 'tables'
    assert _run(['ablation', '--config', config, '--out', str(out)], capsys)[0] == 0
    assert len(pd.read_csv(out / 'ablation.csv')) == 3
    assert _run(['pool-sweep', '--config', config, '--out', str(out), '--pool-sizes', '1', '2'], capsys)[0] == 0
    assert list(pd.read_csv(out / 'pool_sweep.csv')['pool_size']) == [1, 2]

"""Subcommand handlers. Each returns a process exit code."""
import functools
import logging
import os
from dataclasses import replace

from config.experiment import ExperimentConfig, parse_config
from core.checkpoint import load_checkpoint, save_checkpoint
from core.history import read_history_jsonl, write_history_jsonl
from core.trainer import (extract_path, prepare_domains, project_features, run_ablation_suite,
                          run_pool_size_sweep, target_accuracy, train_joint)
from data.domains import split_roles, write_domains_csv
from utils.errors import CdaError, ConfigurationError
from utils.plots import emit_feature_projection, emit_reward_curve, emit_selection_heatmap

logger = logging.getLogger('execution.commands')

DOMAINS_FILE = 'domains.csv'
HISTORY_FILE = 'history.jsonl'
CHECKPOINT_FILE = 'model.ckpt'


def reports_errors(command):
    """Turn library errors into a logged message and exit code 1."""
    @functools.wraps(command)
    def wrapper(args):
        try:
            return command(args)
        except (CdaError, OSError) as e:
            logger.error(f"{command.__name__} failed: {e}")
            return 1
    return wrapper


def load_config(args):
    """Config file (if any) with --seed, --out and --domains applied on top."""
    config_path = getattr(args, 'config', None)
    cfg = parse_config(config_path) if config_path else ExperimentConfig()
    overrides = {}
    if getattr(args, 'seed', None) is not None:
        overrides['seed'] = args.seed
    if getattr(args, 'out', None):
        overrides['output_dir'] = args.out
    if getattr(args, 'domains', None):
        overrides['generator'] = 'csv'
        overrides['csv_path'] = args.domains
    return replace(cfg, **overrides).validate()


def _output(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _checkpoint_path(args, cfg):
    return getattr(args, 'checkpoint', None) or _output(cfg, CHECKPOINT_FILE)


def _format_path(path, domains):
    return ','.join(f'{meta:g}' if meta is not None else str(domain_id)
                    for domain_id, meta in zip(path.domain_ids, path.metas(domains)))


@reports_errors
def cmd_generate(args):
    cfg = load_config(args)
    if cfg.generator == 'csv':
        raise ConfigurationError("generate needs a synthetic generator, not a CSV source")
    domains = prepare_domains(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = write_domains_csv(domains, _output(cfg, DOMAINS_FILE), include_eval_labels=cfg.eval_labels)
    print(path)
    return 0


@reports_errors
def cmd_train(args):
    cfg = load_config(args)
    domains = prepare_domains(cfg)
    model, history = train_joint(cfg, domains)
    write_history_jsonl(history, _output(cfg, HISTORY_FILE))
    save_checkpoint(model, _output(cfg, CHECKPOINT_FILE))
    _, _, target = split_roles(domains)
    accuracy = target_accuracy(model, domains) if target.eval_labels is not None else None
    print(f"target_accuracy = {accuracy!r}")
    print(f"mean_cumulative_reward = {history.last.mean_cumulative_reward!r}")
    return 0


@reports_errors
def cmd_eval(args):
    cfg = load_config(args)
    model = load_checkpoint(_checkpoint_path(args, cfg))
    accuracy = target_accuracy(model, prepare_domains(cfg))
    print(f"target_accuracy = {accuracy!r}")
    return 0


@reports_errors
def cmd_path(args):
    cfg = load_config(args)
    model = load_checkpoint(_checkpoint_path(args, cfg))
    domains = prepare_domains(cfg)
    path = extract_path(model, domains, rows=cfg.distance_rows)
    print(_format_path(path, domains))
    return 0


def _history_paths(args, cfg):
    return getattr(args, 'history', None) or [_output(cfg, HISTORY_FILE)]


@reports_errors
def cmd_plot_selection(args):
    cfg = load_config(args)
    history = read_history_jsonl(_history_paths(args, cfg)[0])
    print(emit_selection_heatmap(history, _output(cfg, 'selection.svg')))
    return 0


def _history_label(path, taken):
    label = os.path.basename(os.path.dirname(os.path.abspath(path))) or os.path.splitext(os.path.basename(path))[0]
    return path if label in taken else label


@reports_errors
def cmd_plot_reward(args):
    cfg = load_config(args)
    histories = {}
    for path in _history_paths(args, cfg):
        histories[_history_label(path, histories)] = read_history_jsonl(path)
    print(emit_reward_curve(histories, _output(cfg, 'reward.svg')))
    return 0


@reports_errors
def cmd_plot_features(args):
    cfg = load_config(args)
    model = load_checkpoint(_checkpoint_path(args, cfg))
    frame = project_features(model, prepare_domains(cfg))
    print(emit_feature_projection(frame, _output(cfg, 'features.svg')))
    return 0


@reports_errors
def cmd_ablation(args):
    cfg = load_config(args)
    table = run_ablation_suite(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = _output(cfg, 'ablation.csv')
    table.to_csv(path, index=False, float_format='%.6g', lineterminator='\n')
    logger.info(f"Wrote {path}")
    print(table.to_string(index=False))
    return 0


@reports_errors
def cmd_pool_sweep(args):
    cfg = load_config(args)
    table = run_pool_size_sweep(cfg, tuple(args.pool_sizes))
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = _output(cfg, 'pool_sweep.csv')
    table.to_csv(path, index=False, float_format='%.6g', lineterminator='\n')
    logger.info(f"Wrote {path}")
    print(table.to_string(index=False))
    return 0


COMMANDS = {
    'generate': cmd_generate,
    'train': cmd_train,
    'eval': cmd_eval,
    'path': cmd_path,
    'plot-selection': cmd_plot_selection,
    'plot-reward': cmd_plot_reward,
    'plot-features': cmd_plot_features,
    'ablation': cmd_ablation,
    'pool-sweep': cmd_pool_sweep,
}

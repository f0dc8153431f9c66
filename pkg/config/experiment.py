"""Experiment configuration: dataclass, INI parsing and echo."""
import configparser
import logging
import re
from dataclasses import dataclass, field, fields
from typing import List

from config import settings
from utils.errors import ConfigurationError, ParseError

logger = logging.getLogger('config.experiment')

MODES = ('classifier_only', 'disentangle_only', 'full')
DATA_SOURCES = ('gaussians', 'moons', 'csv')
SECTIONS = ('data', 'network', 'training', 'policy', 'distance', 'output')


def _setting(section, default):
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata={'section': section})
    return field(default=default, metadata={'section': section})


@dataclass
class ExperimentConfig:
    """Everything one training run needs. Defaults come from config.settings."""

    # [data]
    generator: str = _setting('data', settings.DATA_GENERATOR)
    csv_path: str = _setting('data', settings.CSV_PATH)
    angles: List[float] = _setting('data', settings.ANGLES)
    n_per_domain: int = _setting('data', settings.N_PER_DOMAIN)
    noise_sd: float = _setting('data', settings.NOISE_SD)
    eval_labels: bool = _setting('data', settings.EVAL_LABELS)
    # [network]
    feature_hidden: List[int] = _setting('network', settings.FEATURE_HIDDEN)
    feature_dim: int = _setting('network', settings.FEATURE_DIM)
    invariant_hidden: List[int] = _setting('network', settings.INVARIANT_HIDDEN)
    invariant_dim: int = _setting('network', settings.INVARIANT_DIM)
    specific_hidden: List[int] = _setting('network', settings.SPECIFIC_HIDDEN)
    specific_dim: int = _setting('network', settings.SPECIFIC_DIM)
    mine_hidden: List[int] = _setting('network', settings.MINE_HIDDEN)
    policy_hidden: List[int] = _setting('network', settings.POLICY_HIDDEN)
    # [training]
    epochs: int = _setting('training', settings.EPOCHS)
    batch_size: int = _setting('training', settings.BATCH_SIZE)
    feature_rate: float = _setting('training', settings.FEATURE_RATE)
    mine_rate: float = _setting('training', settings.MINE_RATE)
    policy_rate: float = _setting('training', settings.POLICY_RATE)
    rollouts: int = _setting('training', settings.ROLLOUTS)
    mode: str = _setting('training', settings.MODE)
    seed: int = _setting('training', settings.SEED)
    train_selected_only: bool = _setting('training', settings.TRAIN_SELECTED_ONLY)
    aligned_batches: bool = _setting('training', settings.ALIGNED_BATCHES)
    divergence_limit: float = _setting('training', settings.DIVERGENCE_LIMIT)
    adapt_steps: int = _setting('training', settings.ADAPT_STEPS)
    adapt_keep: float = _setting('training', settings.ADAPT_KEEP)
    # [policy]
    gamma: float = _setting('policy', settings.GAMMA)
    penalty: float = _setting('policy', settings.PENALTY)
    penalty_scale: float = _setting('policy', settings.PENALTY_SCALE)
    baseline: bool = _setting('policy', settings.POLICY_BASELINE)
    # [distance]
    method: str = _setting('distance', settings.DISTANCE_METHOD)
    n_projections: int = _setting('distance', settings.N_PROJECTIONS)
    distance_rows: int = _setting('distance', settings.DISTANCE_ROWS)
    distance_on: str = _setting('distance', settings.DISTANCE_ON)
    # [output]
    output_dir: str = _setting('output', settings.OUTPUT_DIR)
    progress: bool = _setting('output', settings.PROGRESS)

    def violations(self):
        """List of (key, message) pairs for every broken constraint."""
        problems = []

        def check(condition, key, message):
            if not condition:
                problems.append((key, message))

        check(self.generator in DATA_SOURCES, 'generator', f"generator must be one of {DATA_SOURCES}")
        check(self.generator != 'csv' or bool(self.csv_path), 'csv_path',
              "csv_path is required when generator = csv")
        check(self.generator == 'csv' or len(self.angles) >= 3, 'angles',
              "angles needs at least 3 entries (source, intermediates, target)")
        check(self.n_per_domain >= 1, 'n_per_domain', "n_per_domain must be >= 1")
        check(self.noise_sd > 0, 'noise_sd', "noise_sd must be > 0")
        for key in ('feature_dim', 'invariant_dim', 'specific_dim'):
            check(getattr(self, key) >= 1, key, f"{key} must be >= 1")
        for key in ('feature_hidden', 'invariant_hidden', 'specific_hidden', 'mine_hidden', 'policy_hidden'):
            check(all(width >= 1 for width in getattr(self, key)), key, f"{key} widths must be >= 1")
        check(self.epochs >= 1, 'epochs', "epochs must be >= 1")
        check(self.batch_size >= 2, 'batch_size', "batch_size must be >= 2")
        for key in ('feature_rate', 'mine_rate', 'policy_rate'):
            check(getattr(self, key) > 0, key, f"{key} must be > 0")
        check(self.rollouts >= 0, 'rollouts', "rollouts must be >= 0 (0 means one per intermediate)")
        check(self.mode in MODES, 'mode', f"mode must be one of {MODES}")
        check(self.seed >= 0, 'seed', "seed must be >= 0")
        check(self.divergence_limit > 0, 'divergence_limit', "divergence_limit must be > 0")
        check(0.0 <= self.gamma < 1.0, 'gamma', f"gamma must lie in [0, 1), got {self.gamma}")
        check(self.penalty <= 0, 'penalty', f"penalty must be <= 0 (0 scales it), got {self.penalty}")
        check(self.penalty_scale > 0, 'penalty_scale', f"penalty_scale must be > 0, got {self.penalty_scale}")
        check(self.adapt_steps >= 0, 'adapt_steps', "adapt_steps must be >= 0")
        check(0.0 < self.adapt_keep <= 1.0, 'adapt_keep', f"adapt_keep must lie in (0, 1], got {self.adapt_keep}")
        check(self.method in ('exact', 'sliced'), 'method', "method must be 'exact' or 'sliced'")
        check(self.n_projections >= 1, 'n_projections', "n_projections must be >= 1")
        check(self.distance_rows >= 1, 'distance_rows', "distance_rows must be >= 1")
        check(self.method != 'exact' or self.distance_rows <= settings.EXACT_MAX_POINTS, 'distance_rows',
              f"exact distances support at most {settings.EXACT_MAX_POINTS} rows")
        check(self.distance_on in ('cloud', 'pooled'), 'distance_on', "distance_on must be 'cloud' or 'pooled'")
        return problems

    def validate(self):
        problems = self.violations()
        if problems:
            key, message = problems[0]
            raise ConfigurationError(f"{key}: {message}")
        return self


def _section_of(f):
    return f.metadata['section']


def _format_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, list):
        return ', '.join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg):
    """Render ``cfg`` as the INI text ``parse_config`` reads back."""
    lines = []
    for section in SECTIONS:
        lines.append(f'[{section}]')
        for f in fields(cfg):
            if _section_of(f) == section:
                lines.append(f'{f.name} = {_format_value(getattr(cfg, f.name))}')
        lines.append('')
    return '\n'.join(lines)


def _convert(raw, default):
    """Parse ``raw`` into the type of ``default``."""
    raw = raw.strip()
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
            raise ValueError(f"expected a boolean, got '{raw}'")
        return configparser.ConfigParser.BOOLEAN_STATES[lowered]
    if isinstance(default, list):
        item_type = float if default and isinstance(default[0], float) else int
        if not raw:
            return []
        return [item_type(item.strip()) for item in raw.split(',')]
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _key_lines(text):
    """Map (section, key) to the 1-based line it is defined on."""
    located, section = {}, None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r'^\[([^\]]+)\]$', stripped)
        if header:
            section = header.group(1).strip()
            located[(section, None)] = number
            continue
        match = re.match(r'^([^=:#;\s][^=:]*?)\s*[=:]', stripped)
        if match and section is not None:
            located[(section, match.group(1).strip().lower())] = number
    return located


def parse_config_text(text, source='<config>'):
    """Parse INI text into a validated ExperimentConfig.

    Returns:
        tuple: (ExperimentConfig, list of keys left at their defaults)
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateOptionError as e:
        raise ParseError(f"duplicate key '{e.option}'", line=e.lineno, key=e.option) from e
    except configparser.DuplicateSectionError as e:
        raise ParseError(f"duplicate section [{e.section}]", line=e.lineno) from e
    except configparser.MissingSectionHeaderError as e:
        raise ParseError("key outside of a [section]", line=e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ParseError(f"malformed line in {source}", line=line) from e

    lines = _key_lines(text)
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    values = {}

    for section in parser.sections():
        if section not in SECTIONS:
            raise ParseError(f"unknown section [{section}]", line=lines.get((section, None)))
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            f = by_name.get(key)
            if f is None or _section_of(f) != section:
                raise ParseError(f"unknown key '{key}' in [{section}]", line=line, key=key)
            try:
                values[key] = _convert(raw, getattr(defaults, key))
            except ValueError as e:
                raise ParseError(f"{key}: {e}", line=line, key=key) from e

    cfg = ExperimentConfig(**values)
    for key, message in cfg.violations():
        f = by_name[key]
        raise ParseError(f"{key}: {message}", line=lines.get((_section_of(f), key)), key=key)

    defaulted = [name for name in by_name if name not in values]
    return cfg, defaulted


def parse_config(path, echo=True):
    """Read a config file, apply defaults, validate, and echo the result.

    Args:
        path: INI file with [data], [network], [training], [policy],
            [distance] and [output] sections; every key is optional
        echo: Print the effective configuration to standard output

    Returns:
        ExperimentConfig
    """
    with open(path, 'r') as f:
        text = f.read()
    cfg, defaulted = parse_config_text(text, source=str(path))
    if defaulted:
        notice = f"Defaults applied for {len(defaulted)} keys: {', '.join(defaulted)}"
        logger.warning(notice)
        if echo:
            print(f'# {notice}')
    if echo:
        print(format_config(cfg))
    return cfg

"""Trained model container and its plain-text checkpoint format.

Layout::

    # rlcda-checkpoint v1
    network feature dims=2,16,8 output=identity
    W0 2 16
    <16 float.hex values>        (one line per row)
    b0 16
    <16 float.hex values>
    ...
    path 1,3
    meta 0=0x0.0p+0

Values are written with ``float.hex`` so a reload is bit-exact.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from core.numerics import MlpNetwork
from data.domains import TransferPath
from utils.errors import DimensionError, ParseError

logger = logging.getLogger('core.checkpoint')

HEADER = '# rlcda-checkpoint v1'
NETWORK_NAMES = ('feature', 'invariant', 'specific', 'classifier', 'policy')


@dataclass(eq=False)
class TrainedModel:
    """Final F, I, S, C, P and the extracted transfer path."""

    feature: MlpNetwork
    invariant: MlpNetwork
    specific: MlpNetwork
    classifier: MlpNetwork
    policy: MlpNetwork
    path: TransferPath = field(default_factory=lambda: TransferPath(()))
    domain_meta: Dict[int, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        shared = self.feature.output_dim
        if self.invariant.input_dim != shared or self.specific.input_dim != shared:
            raise DimensionError("I and S must consume F's output")
        if self.classifier.input_dim != self.invariant.output_dim:
            raise DimensionError("C must consume I's output")
        if self.policy.input_dim != 3 * self.specific.output_dim:
            raise DimensionError("P must consume three specific embeddings")

    def networks(self):
        return {name: getattr(self, name) for name in NETWORK_NAMES}


def _hex_row(values):
    return ' '.join(float(v).hex() for v in values)


def _format_meta(value):
    return 'none' if value is None else float(value).hex()


def save_checkpoint(model, path):
    lines = [HEADER]
    for name, net in model.networks().items():
        dims = ','.join(str(d) for d in net.layer_dims)
        lines.append(f'network {name} dims={dims} output={net.output_activation}')
        for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
            lines.append(f'W{layer} {w.shape[0]} {w.shape[1]}')
            lines.extend(_hex_row(row) for row in w)
            lines.append(f'b{layer} {b.shape[0]}')
            lines.append(_hex_row(b))
    lines.append('path ' + ','.join(str(d) for d in model.path.domain_ids))
    for domain_id in sorted(model.domain_meta):
        lines.append(f'meta {domain_id}={_format_meta(model.domain_meta[domain_id])}')

    directory = os.path.dirname(str(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    logger.info(f"Saved checkpoint to {path}")
    return path


class _LineReader:
    def __init__(self, lines):
        self.lines = lines
        self.index = 0

    @property
    def number(self):
        return self.index + 1

    def peek(self):
        return self.lines[self.index] if self.index < len(self.lines) else None

    def take(self):
        line = self.peek()
        if line is None:
            raise ParseError("unexpected end of checkpoint", line=self.number)
        self.index += 1
        return line


def _parse_values(text, expected, line):
    parts = text.split()
    if len(parts) != expected:
        raise ParseError(f"expected {expected} values, got {len(parts)}", line=line)
    try:
        return [float.fromhex(part) for part in parts]
    except ValueError as e:
        raise ParseError(f"bad hex float: {e}", line=line) from e


def _read_network(reader):
    number = reader.number
    parts = reader.take().split()
    if len(parts) != 4 or parts[0] != 'network' or not parts[2].startswith('dims=') \
            or not parts[3].startswith('output='):
        raise ParseError("expected 'network <name> dims=... output=...'", line=number)
    name = parts[1]
    try:
        dims = [int(d) for d in parts[2][len('dims='):].split(',')]
    except ValueError as e:
        raise ParseError(f"bad dims for network {name}", line=number) from e
    activation = parts[3][len('output='):]

    weights, biases = [], []
    for layer in range(len(dims) - 1):
        number = reader.number
        header = reader.take().split()
        if header != [f'W{layer}', str(dims[layer]), str(dims[layer + 1])]:
            raise ParseError(f"expected weight header W{layer} for network {name}", line=number)
        rows = [_parse_values(reader.take(), dims[layer + 1], reader.index) for _ in range(dims[layer])]
        number = reader.number
        header = reader.take().split()
        if header != [f'b{layer}', str(dims[layer + 1])]:
            raise ParseError(f"expected bias header b{layer} for network {name}", line=number)
        bias = _parse_values(reader.take(), dims[layer + 1], reader.index)
        weights.append(np.array(rows, dtype=np.float64).reshape(dims[layer], dims[layer + 1]))
        biases.append(np.array(bias, dtype=np.float64))
    try:
        return name, MlpNetwork(weights, biases, activation)
    except (ValueError, DimensionError) as e:
        raise ParseError(f"network {name}: {e}", line=number) from e


def load_checkpoint(path):
    with open(path, 'r') as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != HEADER:
        raise ParseError(f"missing checkpoint header '{HEADER}'", line=1)

    reader = _LineReader(lines)
    reader.take()
    networks = {}
    while reader.peek() is not None and reader.peek().startswith('network '):
        name, net = _read_network(reader)
        networks[name] = net
    missing = [name for name in NETWORK_NAMES if name not in networks]
    unknown = [name for name in networks if name not in NETWORK_NAMES]
    if missing or unknown:
        raise ParseError(f"checkpoint networks do not match (missing {missing}, unknown {unknown})",
                         line=reader.number)

    number = reader.number
    line = reader.take()
    if not (line == 'path' or line.startswith('path ')):
        raise ParseError("expected 'path' line", line=number)
    ids_text = line[len('path'):].strip()
    try:
        path_ids = tuple(int(d) for d in ids_text.split(',')) if ids_text else ()
    except ValueError as e:
        raise ParseError("bad path ids", line=number) from e

    domain_meta = {}
    while reader.peek() is not None:
        number = reader.number
        line = reader.take()
        if not line.strip():
            continue
        try:
            key, value = line[len('meta '):].split('=', 1)
            if not line.startswith('meta '):
                raise ValueError(line)
            domain_meta[int(key)] = None if value == 'none' else float.fromhex(value)
        except ValueError as e:
            raise ParseError(f"bad meta line '{line}'", line=number) from e

    try:
        model = TrainedModel(path=TransferPath(path_ids), domain_meta=domain_meta, **networks)
    except DimensionError as e:
        raise ParseError(f"inconsistent networks: {e}", line=reader.number) from e
    logger.info(f"Loaded checkpoint from {path}")
    return model

"""Per-epoch training records and their JSON-lines persistence."""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np
import pandas as pd

from utils.errors import ParseError

logger = logging.getLogger('core.history')


@dataclass
class EpochRecord:
    """What happened in one epoch.

    ``selection`` has one entry per intermediate domain (ordered by meta,
    matching ``intermediates``): 0 when the domain was not selected in the
    epoch's last rollout, otherwise its 1-based position in that path.
    """

    epoch: int
    l_mi: Optional[float]
    l_ms: Optional[float]
    l_ce: Optional[float]
    mean_cumulative_reward: float
    cumulative_rewards: List[float]
    rewards: List[List[float]]
    selection: List[int]
    path: List[int]
    path_meta: List[Optional[float]]
    intermediates: List[int]
    intermediate_meta: List[Optional[float]]
    source_accuracy: Optional[float] = None
    target_accuracy: Optional[float] = None
    policy_grad_norm: float = 0.0


RECORD_KEYS = tuple(f.name for f in fields(EpochRecord))


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def last(self):
        return self.records[-1] if self.records else None

    @property
    def mean_cumulative_rewards(self):
        return [record.mean_cumulative_reward for record in self.records]

    def selection_matrix(self):
        """(K, epochs) integer matrix of selection orders."""
        if not self.records:
            return np.zeros((0, 0), dtype=np.int64)
        return np.array([record.selection for record in self.records], dtype=np.int64).T

    def reward_moving_average(self, window=10):
        rewards = pd.Series(self.mean_cumulative_rewards, dtype=float)
        return rewards.rolling(window, min_periods=1).mean().to_numpy()

    def to_frame(self):
        """Scalar columns of every record as a DataFrame indexed by epoch."""
        scalar_keys = ['epoch', 'l_mi', 'l_ms', 'l_ce', 'mean_cumulative_reward',
                       'source_accuracy', 'target_accuracy', 'policy_grad_norm']
        rows = [{key: getattr(record, key) for key in scalar_keys} for record in self.records]
        return pd.DataFrame(rows, columns=scalar_keys).set_index('epoch')


def record_to_json(record):
    return json.dumps(asdict(record), allow_nan=False)


def write_history_jsonl(history, path):
    """Write one JSON object per epoch, keys in EpochRecord field order."""
    directory = os.path.dirname(str(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='\n') as f:
        for record in history:
            f.write(record_to_json(record) + '\n')
    logger.info(f"Wrote {len(history)} epoch records to {path}")
    return path


def read_history_jsonl(path):
    history = TrainingHistory()
    with open(path, 'r') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line=number) from e
            missing = [key for key in RECORD_KEYS if key not in payload]
            unknown = [key for key in payload if key not in RECORD_KEYS]
            if missing or unknown:
                raise ParseError(f"record keys do not match (missing {missing}, unknown {unknown})",
                                 line=number)
            history.append(EpochRecord(**payload))
    return history

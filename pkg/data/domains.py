"""Domain data model, CSV ingestion and minibatching."""
import csv
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from utils.errors import ConfigurationError, DataError, ParseError

logger = logging.getLogger('data.domains')

BASE_COLUMNS = ['domain_id', 'role', 'label']


class DomainRole(str, Enum):
    SOURCE = 'source'
    INTERMEDIATE = 'intermediate'
    TARGET = 'target'


def _as_labels(values, n, name):
    labels = np.asarray(values)
    if labels.ndim != 1 or labels.shape[0] != n:
        raise DataError(f"{name} must have one entry per row ({n}), got shape {labels.shape}")
    if labels.size and (np.any(labels < 0) or np.any(labels != np.round(labels))):
        raise DataError(f"{name} must be non-negative class indices")
    labels = labels.astype(np.int64)
    labels.setflags(write=False)
    return labels


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """One domain: features, optional labels and its role in the experiment.

    ``labels`` are only present on the source domain. ``eval_labels`` is the
    evaluation-only channel; training code never reads it.
    """

    domain_id: int
    role: DomainRole
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    meta: Optional[float] = None
    eval_labels: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'domain_id', int(self.domain_id))
        try:
            object.__setattr__(self, 'role', DomainRole(self.role))
        except ValueError:
            raise DataError(f"Unknown role '{self.role}' for domain {self.domain_id}")

        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DataError(f"Domain {self.domain_id} needs a non-empty (n x d) feature matrix")
        if not np.all(np.isfinite(features)):
            raise DataError(f"Domain {self.domain_id} has non-finite features")
        features.setflags(write=False)
        object.__setattr__(self, 'features', features)

        if self.role == DomainRole.SOURCE and self.labels is None:
            raise DataError(f"Source domain {self.domain_id} must be labeled")
        if self.role != DomainRole.SOURCE and self.labels is not None:
            raise DataError(
                f"Domain {self.domain_id} ({self.role.value}) cannot carry training labels; "
                "use eval_labels")
        if self.labels is not None:
            object.__setattr__(self, 'labels', _as_labels(self.labels, self.n, 'labels'))
        if self.eval_labels is not None:
            object.__setattr__(self, 'eval_labels', _as_labels(self.eval_labels, self.n, 'eval_labels'))
        if self.meta is not None:
            object.__setattr__(self, 'meta', float(self.meta))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DomainDataset):
            return NotImplemented
        return (self.domain_id == other.domain_id and self.role == other.role
                and self.meta == other.meta
                and np.array_equal(self.features, other.features)
                and _optional_equal(self.labels, other.labels))


def _optional_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True)
class TransferPath:
    """Ordered intermediate domain ids selected for transfer."""

    domain_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'domain_ids', tuple(int(d) for d in self.domain_ids))

    def __len__(self):
        return len(self.domain_ids)

    def __iter__(self):
        return iter(self.domain_ids)

    def validate(self, intermediate_ids, max_length=None):
        """Check the path is a duplicate-free list of intermediate ids, L <= K."""
        intermediate_ids = set(int(i) for i in intermediate_ids)
        max_length = len(intermediate_ids) if max_length is None else max_length
        if len(set(self.domain_ids)) != len(self.domain_ids):
            raise DataError(f"Transfer path {self.domain_ids} repeats a domain")
        unknown = [d for d in self.domain_ids if d not in intermediate_ids]
        if unknown:
            raise DataError(f"Transfer path contains non-intermediate domains {unknown}")
        if len(self.domain_ids) > max_length:
            raise DataError(f"Transfer path length {len(self.domain_ids)} exceeds K={max_length}")
        return self

    def metas(self, domains):
        """Meta descriptors (e.g. angles) of the path, falling back to ids."""
        by_id = {d.domain_id: d for d in domains}
        return [by_id[d].meta if by_id[d].meta is not None else d for d in self.domain_ids]


def split_roles(domains):
    """Split an experiment into (source, intermediates, target).

    Intermediates are ordered by meta descriptor, then by id.
    """
    domains = list(domains)
    sources = [d for d in domains if d.role == DomainRole.SOURCE]
    targets = [d for d in domains if d.role == DomainRole.TARGET]
    intermediates = [d for d in domains if d.role == DomainRole.INTERMEDIATE]
    if len(sources) != 1 or len(targets) != 1:
        raise ConfigurationError(
            f"Experiment needs exactly one source and one target, got "
            f"{len(sources)} source(s) and {len(targets)} target(s)")
    if not intermediates:
        raise ConfigurationError("Experiment needs at least one intermediate domain")
    ids = [d.domain_id for d in domains]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"Domain ids must be unique, got {ids}")
    dims = {d.dim for d in domains}
    if len(dims) != 1:
        raise ConfigurationError(f"All domains must share one feature dimension, got {sorted(dims)}")
    intermediates.sort(key=lambda d: (d.meta if d.meta is not None else float(d.domain_id), d.domain_id))
    return sources[0], intermediates, targets[0]


def n_classes(domains):
    """Number of classes M seen in source labels (at least 2)."""
    source, _, _ = split_roles(domains)
    return max(2, int(source.labels.max()) + 1)


def write_domains_csv(domains, path, include_eval_labels=False):
    """Write domains to the CSV exchange format.

    Header: ``domain_id,role,label[,meta],f0,f1,...``. The meta column is
    written when every domain has a meta descriptor.
    """
    domains = list(domains)
    if not domains:
        raise ConfigurationError("No domains to write")
    dim = domains[0].dim
    with_meta = all(d.meta is not None for d in domains)

    frames = []
    for ds in domains:
        if ds.labels is not None:
            labels = [str(int(v)) for v in ds.labels]
        elif include_eval_labels and ds.eval_labels is not None:
            labels = [str(int(v)) for v in ds.eval_labels]
        else:
            labels = [''] * ds.n
        frame = pd.DataFrame({
            'domain_id': np.full(ds.n, ds.domain_id, dtype=np.int64),
            'role': ds.role.value,
            'label': labels,
        })
        if with_meta:
            frame['meta'] = float(ds.meta)
        features = pd.DataFrame(ds.features, columns=[f'f{j}' for j in range(dim)])
        frames.append(pd.concat([frame, features], axis=1))

    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format='%.17g',
                                                lineterminator='\n')
    logger.info(f"Wrote {len(domains)} domains to {path}")
    return path


def _parse_header(header):
    if header[:3] != BASE_COLUMNS:
        raise ParseError(f"header must start with {','.join(BASE_COLUMNS)}", line=1)
    with_meta = len(header) > 3 and header[3] == 'meta'
    feature_cols = header[4:] if with_meta else header[3:]
    if not feature_cols:
        raise ParseError("header declares no feature columns", line=1)
    expected = [f'f{j}' for j in range(len(feature_cols))]
    if feature_cols != expected:
        raise ParseError(f"feature columns must be {','.join(expected)}", line=1)
    return with_meta, len(feature_cols)


def load_domains_csv(path, eval_labels=False):
    """Load domains from the CSV exchange format.

    Args:
        path: CSV file path
        eval_labels: Accept labels on non-source rows and route them to the
            evaluation-only channel

    Returns:
        list: One DomainDataset per distinct domain_id, ordered by id
    """
    roles = {r.value for r in DomainRole}
    records = []
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ParseError("file is empty", line=1)
        with_meta, dim = _parse_header([h.strip() for h in header])
        n_fields = (4 if with_meta else 3) + dim

        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != n_fields:
                raise ParseError(f"expected {n_fields} fields ({dim} features), got {len(row)}", line=line)
            try:
                domain_id = int(row[0])
            except ValueError:
                raise ParseError(f"domain_id '{row[0]}' is not an integer", line=line)
            role = row[1].strip()
            if role not in roles:
                raise ParseError(f"unknown role '{role}', expected source|intermediate|target", line=line)
            label = row[2].strip()
            if label:
                if role != DomainRole.SOURCE.value and not eval_labels:
                    raise ParseError(f"label on a {role} row (load with eval_labels to accept it)", line=line)
                try:
                    label = int(label)
                except ValueError:
                    raise ParseError(f"label '{row[2]}' is not an integer", line=line)
                if label < 0:
                    raise ParseError(f"label {label} is negative", line=line)
            elif role == DomainRole.SOURCE.value:
                raise ParseError("source rows must be labeled", line=line)
            else:
                label = None
            offset = 4 if with_meta else 3
            try:
                meta = float(row[3]) if with_meta else None
                features = [float(v) for v in row[offset:]]
            except ValueError:
                raise ParseError("non-numeric meta or feature value", line=line)
            if not np.all(np.isfinite(features)):
                raise ParseError("non-finite feature value", line=line)
            records.append((line, domain_id, role, label, meta, features))

    if not records:
        raise ParseError("file has no data rows", line=2)

    frame = pd.DataFrame(records, columns=['line', 'domain_id', 'role', 'label', 'meta', 'features'])
    domains = []
    for domain_id, group in frame.groupby('domain_id', sort=True):
        group_roles = group['role'].unique()
        if len(group_roles) != 1:
            raise ParseError(f"domain {domain_id} mixes roles {sorted(group_roles)}",
                             line=int(group['line'].iloc[0]))
        role = DomainRole(group_roles[0])
        labels = group['label'].tolist()
        has_label = [v is not None and not pd.isna(v) for v in labels]
        if role != DomainRole.SOURCE and any(has_label) and not all(has_label):
            raise ParseError(f"domain {domain_id} is only partially labeled",
                             line=int(group['line'].iloc[has_label.index(False)]))
        metas = group['meta'].unique() if with_meta else [None]
        if len(metas) != 1:
            raise ParseError(f"domain {domain_id} has more than one meta value",
                             line=int(group['line'].iloc[0]))
        features = np.array(group['features'].tolist(), dtype=np.float64)
        label_array = np.array(labels, dtype=np.int64) if all(has_label) else None
        if role == DomainRole.SOURCE:
            domains.append(DomainDataset(domain_id, role, features, labels=label_array,
                                         meta=metas[0], eval_labels=label_array))
        else:
            domains.append(DomainDataset(domain_id, role, features, meta=metas[0],
                                         eval_labels=label_array))

    counts = {r: sum(1 for d in domains if d.role == r) for r in DomainRole}
    if counts[DomainRole.SOURCE] != 1 or counts[DomainRole.TARGET] != 1:
        raise ParseError(
            f"file must define exactly one source and one target domain, got "
            f"{counts[DomainRole.SOURCE]} source(s) and {counts[DomainRole.TARGET]} target(s)")
    logger.info(f"Loaded {len(domains)} domains from {path}")
    return domains


def _check_batch_size(n, size):
    if size < 1 or size > n:
        raise ConfigurationError(f"Batch size must be in [1, {n}], got {size}")


def minibatch(ds, size, rng):
    """Uniform sample of rows without replacement.

    Returns:
        tuple: (features, labels or None)
    """
    _check_batch_size(ds.n, size)
    idx = rng.choice(ds.n, size=size, replace=False)
    labels = ds.labels[idx] if ds.labels is not None else None
    return ds.features[idx], labels


def aligned_minibatch(datasets, size, rng):
    """Draw one index set shared by all datasets when they have equal size.

    Rows with the same index in the synthetic generators share their latent
    draw, so shared indices keep row-wise pairs informative. Unequal sizes
    fall back to independent draws.
    """
    sizes = {ds.n for ds in datasets}
    if len(sizes) != 1:
        return [minibatch(ds, size, rng) for ds in datasets]
    n = sizes.pop()
    _check_batch_size(n, size)
    idx = rng.choice(n, size=size, replace=False)
    return [(ds.features[idx], ds.labels[idx] if ds.labels is not None else None)
            for ds in datasets]

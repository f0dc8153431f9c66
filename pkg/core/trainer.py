"""Joint training of the disentanglement networks and the domain selector."""
import logging
from dataclasses import replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.experiment import MODES
from config.settings import DISTANCE_ROWS
from core.adaptation import adapt_along_path
from core.checkpoint import TrainedModel
from core.disentangle import NetworkDims, StepRates, build_model, disentangle_step, extract, predict_proba
from core.history import EpochRecord, TrainingHistory
from core.numerics import as_matrix, xavier_init
from core.transport import DistanceConfig, domain_distance
from data.domains import TransferPath, aligned_minibatch, load_domains_csv, minibatch, n_classes, split_roles
from data.synthetic import GENERATORS
from strategies.fixed import SelectAllStrategy, SelectNoneStrategy
from strategies.policy import (PolicyGradientStrategy, RewardConfig, RolloutTrace, ScaledPenalty, build_state,
                               greedy_action, take_step)
from utils.errors import ConfigurationError, DataError, DimensionError, DivergenceError, NumericalError
from utils.seeding import derive_seed, make_rng, spawn

logger = logging.getLogger('core.trainer')

# Sub-seed keys; data generation uses the base seed directly
MODEL_SEED, POLICY_SEED, TRAINING_SEED, DISTANCE_SEED, ADAPT_SEED = 1, 2, 3, 4, 5


def prepare_domains(cfg):
    """Load or generate the experiment's domains."""
    if cfg.generator == 'csv':
        return load_domains_csv(cfg.csv_path, eval_labels=cfg.eval_labels)
    if cfg.generator not in GENERATORS:
        raise ConfigurationError(f"Unknown generator '{cfg.generator}'")
    domains = GENERATORS[cfg.generator](cfg.n_per_domain, cfg.angles, cfg.noise_sd, cfg.seed)
    if not cfg.eval_labels:
        domains = [replace(d, eval_labels=None) for d in domains]
    return domains


def build_strategy(cfg, policy):
    if cfg.mode == 'classifier_only':
        return SelectNoneStrategy()
    if cfg.mode == 'disentangle_only':
        return SelectAllStrategy()
    return PolicyGradientStrategy(policy, rate=cfg.policy_rate, baseline=cfg.baseline)


def network_dims(cfg):
    return NetworkDims(cfg.feature_hidden, cfg.feature_dim, cfg.invariant_hidden, cfg.invariant_dim,
                       cfg.specific_hidden, cfg.specific_dim, cfg.mine_hidden)


def build_policy(cfg, seed=None):
    seed = derive_seed(cfg.seed, POLICY_SEED) if seed is None else seed
    return xavier_init([3 * cfg.specific_dim, *cfg.policy_hidden, 1], seed, 'sigmoid')


def _meta_list(domains):
    return [d.meta for d in domains]


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


class JointTrainer:
    """Runs the epoch loop: disentangle, select, reward, update the selector."""

    def __init__(self, cfg, domains, model, strategy):
        """Initialize the trainer with its components."""
        self.cfg = cfg
        self.source, self.intermediates, self.target = split_roles(domains)
        self.domains = [self.source, *self.intermediates, self.target]
        self.model = model
        self.strategy = strategy
        self.history = TrainingHistory()
        self.use_mutual_information = cfg.mode != 'classifier_only'
        self.rates = StepRates(cfg.feature_rate, cfg.mine_rate)
        self.rollouts = cfg.rollouts or len(self.intermediates)

        smallest = min(d.n for d in self.domains)
        self.batch_size = min(cfg.batch_size, smallest)
        if self.batch_size < cfg.batch_size:
            logger.warning(f"Batch size reduced to {self.batch_size} (smallest domain has {smallest} rows)")
        if self.use_mutual_information and self.batch_size < 2:
            raise ConfigurationError("Every domain needs at least 2 rows for MINE")

        self.sample_rows = min(cfg.distance_rows, smallest)
        self.samples = {d.domain_id: d.features[:self.sample_rows] for d in self.domains}
        self.reward_cfg = RewardConfig(
            gamma=cfg.gamma, penalty=cfg.penalty or -cfg.penalty_scale, baseline=cfg.baseline,
            distance=DistanceConfig(method=cfg.method, n_projections=cfg.n_projections,
                                    seed=derive_seed(cfg.seed, DISTANCE_SEED),
                                    distance_on=cfg.distance_on, max_rows=self.sample_rows))
        self.penalty = ScaledPenalty(cfg.penalty, cfg.penalty_scale)

        batch_rng, mine_rng, action_rng, shuffle_rng = spawn(make_rng(derive_seed(cfg.seed, TRAINING_SEED)), 4)
        self.batch_rng = batch_rng
        self.mine_rng = mine_rng
        self.action_rng = action_rng
        self.shuffle_rng = shuffle_rng
        self.adapt_rng = make_rng(derive_seed(cfg.seed, ADAPT_SEED))

    def _check_losses(self, report, epoch, step):
        for name in ('l_mi', 'l_ms', 'l_ce'):
            value = getattr(report, name)
            if value is None:
                continue
            if not np.isfinite(value) or abs(value) > self.cfg.divergence_limit:
                raise DivergenceError(f"Loss {name} diverged ({value}) at epoch {epoch}, step {step}",
                                      epoch=epoch, step=step)

    def _disentangle(self, domain, epoch, step):
        parts = [self.source, domain, self.target]
        if self.cfg.aligned_batches:
            batches = aligned_minibatch(parts, self.batch_size, self.batch_rng)
        else:
            batches = [minibatch(d, self.batch_size, self.batch_rng) for d in parts]
        (source_x, source_y), (inter_x, _), (target_x, _) = batches
        try:
            self.model, report = disentangle_step(
                self.model, source_x, source_y, inter_x, target_x, self.rates, self.mine_rng,
                use_mutual_information=self.use_mutual_information,
                domain_ids=(self.source.domain_id, domain.domain_id, self.target.domain_id))
        except NumericalError as e:
            raise DivergenceError(f"{e} at epoch {epoch}, step {step}", epoch=epoch, step=step) from e
        self._check_losses(report, epoch, step)
        return report

    def _reward_cfg(self, D_it_s):
        self.penalty.observe(D_it_s)
        return replace(self.reward_cfg, penalty=self.penalty.value)

    def _snapshot(self, domain_ids):
        return {domain_id: extract(self.model, self.samples[domain_id], domain_id) for domain_id in domain_ids}

    def run_rollout(self, epoch, reports):
        """One shuffled pass over the intermediate pool."""
        trace = RolloutTrace(gamma=self.cfg.gamma)
        prev_id = self.source.domain_id
        target_id = self.target.domain_id
        order = self.shuffle_rng.permutation(len(self.intermediates))
        for step_index, position in enumerate(order):
            domain = self.intermediates[position]
            if not self.cfg.train_selected_only:
                reports.append(self._disentangle(domain, epoch, step_index))

            bundles = self._snapshot({prev_id, domain.domain_id, target_id})
            prev, current, target = bundles[prev_id], bundles[domain.domain_id], bundles[target_id]
            distance_cfg = self.reward_cfg.distance
            distances = (domain_distance(prev, target, distance_cfg),
                         domain_distance(current, prev, distance_cfg),
                         domain_distance(current, target, distance_cfg))
            step, _ = take_step(self.strategy, domain.domain_id, prev.phi, current.phi, target.phi,
                                distances, self._reward_cfg(distances[0]), self.action_rng)
            trace.add(step)

            if step.action.a == 1:
                if self.cfg.train_selected_only:
                    reports.append(self._disentangle(domain, epoch, step_index))
                prev_id = domain.domain_id
        return trace.finish()

    def _selection_row(self, path):
        order = {domain_id: position + 1 for position, domain_id in enumerate(path)}
        return [order.get(d.domain_id, 0) for d in self.intermediates]

    def accuracies(self):
        source_acc = evaluate_accuracy(predict_target(self.model, self.source.features), self.source.labels)
        target_acc = None
        if self.target.eval_labels is not None:
            target_acc = evaluate_accuracy(predict_target(self.model, self.target.features),
                                           self.target.eval_labels)
        return source_acc, target_acc

    def run_epoch(self, epoch):
        """Execute one full epoch and record it."""
        reports, traces = [], []
        for _ in range(self.rollouts):
            traces.append(self.run_rollout(epoch, reports))

        diagnostics = self.strategy.update(traces) if self.strategy.learns else {}

        last_path = traces[-1].path
        by_id = {d.domain_id: d for d in self.domains}
        source_acc, target_acc = self.accuracies()
        cumulative = [trace.cumulative_reward for trace in traces]
        record = EpochRecord(
            epoch=epoch,
            l_mi=_mean_or_none([r.l_mi for r in reports]),
            l_ms=_mean_or_none([r.l_ms for r in reports]),
            l_ce=_mean_or_none([r.l_ce for r in reports]),
            mean_cumulative_reward=float(np.mean(cumulative)),
            cumulative_rewards=[float(c) for c in cumulative],
            rewards=[[float(r) for r in trace.rewards] for trace in traces],
            selection=self._selection_row(last_path),
            path=[int(d) for d in last_path],
            path_meta=[by_id[d].meta for d in last_path],
            intermediates=[d.domain_id for d in self.intermediates],
            intermediate_meta=_meta_list(self.intermediates),
            source_accuracy=source_acc,
            target_accuracy=target_acc,
            policy_grad_norm=float(diagnostics.get('grad_norm', 0.0)),
        )
        self.history.append(record)
        logger.debug(f"Epoch {epoch}: reward {record.mean_cumulative_reward:.4f}, path {record.path_meta}")
        return record

    def run(self):
        """Run every epoch and return (TrainedModel, TrainingHistory)."""
        logger.info(f"Training mode={self.cfg.mode} selector={self.strategy.name} epochs={self.cfg.epochs} "
                    f"K={len(self.intermediates)} rollouts/epoch={self.rollouts}")
        epochs = tqdm(range(self.cfg.epochs), desc=f"Training {self.cfg.mode}", disable=not self.cfg.progress)
        for epoch in epochs:
            record = self.run_epoch(epoch)
            if self.cfg.progress:
                epochs.set_postfix(reward=f"{record.mean_cumulative_reward:.3f}")

        policy = self.strategy.policy_network(3 * self.cfg.specific_dim, self.cfg.policy_hidden)
        path = extract_path(self._trained(policy), self.domains, rows=self.sample_rows)
        self.adapt(path)
        trained = self._trained(policy)
        trained.path = path

        _, target_acc = self.accuracies()
        logger.info(f"Finished {self.cfg.mode} ({self.strategy.name}): target accuracy {target_acc}, "
                    f"path {path.metas(self.domains)}")
        return trained, self.history

    def _trained(self, policy):
        return TrainedModel(self.model.feature, self.model.invariant, self.model.specific,
                            self.model.classifier, policy,
                            domain_meta={d.domain_id: d.meta for d in self.domains})

    def adapt(self, path):
        """Self-train along ``path`` and then on the target.

        The classifier-only ablation keeps the source-only classifier.
        """
        if self.cfg.mode == 'classifier_only':
            return None
        by_id = {d.domain_id: d for d in self.domains}
        hops = [by_id[domain_id] for domain_id in path.domain_ids] + [self.target]
        self.model, report = adapt_along_path(self.model, hops, self.adapt_rng, self.cfg.adapt_steps,
                                              self.cfg.adapt_keep, self.batch_size, self.cfg.feature_rate)
        logger.info(f"Self-trained along {len(report.hops)} domains")
        return report


def train_joint(cfg, domains=None):
    """Train F, I, S, C and the selector jointly.

    Args:
        cfg: Validated ExperimentConfig
        domains: Optional pre-built domains (otherwise ``prepare_domains(cfg)``)

    Returns:
        tuple: (TrainedModel, TrainingHistory)
    """
    cfg.validate()
    domains = prepare_domains(cfg) if domains is None else list(domains)
    source, _, _ = split_roles(domains)
    model = build_model(source.dim, n_classes(domains), network_dims(cfg), derive_seed(cfg.seed, MODEL_SEED))
    strategy = build_strategy(cfg, build_policy(cfg))
    return JointTrainer(cfg, domains, model, strategy).run()


def extract_path(model, domains, mode='greedy', rows=None):
    """Greedy evaluation rollout over the meta-ordered intermediates.

    Each intermediate is selected when p >= 0.5; the state's previous
    embedding starts at the source and moves to each selected domain.
    """
    if mode != 'greedy':
        raise ConfigurationError(f"Unknown path extraction mode '{mode}'")
    source, intermediates, target = split_roles(domains)
    rows = min(rows or DISTANCE_ROWS, min(d.n for d in domains))

    def phi(domain):
        features = model.feature.predict(domain.features[:rows])
        return model.specific.predict(features).mean(axis=0)

    prev_phi, target_phi = phi(source), phi(target)
    selected = []
    for domain in intermediates:
        current = phi(domain)
        action = greedy_action(model.policy, build_state(prev_phi, current, target_phi))
        if action.a == 1:
            selected.append(domain.domain_id)
            prev_phi = current
    return TransferPath(tuple(selected)).validate([d.domain_id for d in intermediates])


def predict_target(model, target_features):
    """argmax of C(I(F(x))) per row; ties go to the lower class index."""
    x = as_matrix(target_features, 'target_features')
    if x.shape[1] != model.feature.input_dim:
        raise DimensionError(f"Features have {x.shape[1]} columns, model expects {model.feature.input_dim}")
    return np.argmax(predict_proba(model, x), axis=1)


def evaluate_accuracy(preds, eval_labels):
    preds, eval_labels = np.asarray(preds), np.asarray(eval_labels)
    if preds.shape[0] == 0 or eval_labels.shape[0] == 0:
        raise DataError("Cannot evaluate accuracy on empty input")
    if preds.shape != eval_labels.shape:
        raise DimensionError(f"{preds.shape[0]} predictions for {eval_labels.shape[0]} labels")
    return float(np.mean(preds == eval_labels))


def target_accuracy(model, domains):
    _, _, target = split_roles(domains)
    if target.eval_labels is None:
        raise DataError("Target domain has no evaluation labels")
    return evaluate_accuracy(predict_target(model, target.features), target.eval_labels)


def _summary_row(model, history, domains):
    source, _, _ = split_roles(domains)
    return {
        'target_accuracy': target_accuracy(model, domains),
        'source_accuracy': evaluate_accuracy(predict_target(model, source.features), source.labels),
        'final_mean_reward': history.last.mean_cumulative_reward,
        'path': ','.join(f'{m:g}' if m is not None else str(d)
                         for d, m in zip(model.path.domain_ids, model.path.metas(domains))),
    }


def run_ablation_suite(cfg, domains=None):
    """Train every mode on the same data and seed.

    Returns:
        pandas.DataFrame: one row per mode
    """
    domains = prepare_domains(cfg) if domains is None else list(domains)
    rows = []
    for mode in MODES:
        mode_cfg = replace(cfg, mode=mode)
        model, history = train_joint(mode_cfg, domains)
        rows.append({'mode': mode, **_summary_row(model, history, domains)})
        logger.info(f"Ablation {mode}: target accuracy {rows[-1]['target_accuracy']:.4f}")
    return pd.DataFrame(rows, columns=['mode', 'target_accuracy', 'source_accuracy',
                                       'final_mean_reward', 'path'])


def run_pool_size_sweep(cfg, pool_sizes=(3, 6, 9)):
    """Full-mode accuracy for several intermediate pool sizes K.

    Intermediate angles are spaced evenly between the configured source and
    target angles.
    """
    if cfg.generator == 'csv':
        raise ConfigurationError("Pool-size sweeps need a synthetic generator")
    rows = []
    for pool_size in pool_sizes:
        if pool_size < 1:
            raise ConfigurationError(f"Pool size must be >= 1, got {pool_size}")
        angles = [float(a) for a in np.linspace(cfg.angles[0], cfg.angles[-1], pool_size + 2)]
        sweep_cfg = replace(cfg, angles=angles, mode='full')
        domains = prepare_domains(sweep_cfg)
        model, history = train_joint(sweep_cfg, domains)
        rows.append({'pool_size': pool_size, **_summary_row(model, history, domains)})
        logger.info(f"Pool size {pool_size}: target accuracy {rows[-1]['target_accuracy']:.4f}")
    frame = pd.DataFrame(rows, columns=['pool_size', 'target_accuracy', 'source_accuracy',
                                        'final_mean_reward', 'path'])
    frame['spread'] = frame['target_accuracy'].max() - frame['target_accuracy'].min()
    return frame


def project_features(model, domains, n_components=3):
    """Linear projection of every domain's f_ds and f_di onto principal axes.

    Returns:
        pandas.DataFrame: domain_id, role, meta, kind and c0..c{n-1} per row
    """
    frames = []
    for kind, head in (('specific', model.specific), ('invariant', model.invariant)):
        blocks = [head.predict(model.feature.predict(d.features)) for d in domains]
        stacked = np.vstack(blocks)
        centered = stacked - stacked.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        axes = vt[:n_components]
        # deterministic sign: largest loading positive
        signs = np.sign(axes[np.arange(axes.shape[0]), np.argmax(np.abs(axes), axis=1)])
        signs[signs == 0] = 1.0
        projected = centered @ (axes * signs[:, None]).T
        if projected.shape[1] < n_components:
            projected = np.hstack([projected, np.zeros((projected.shape[0], n_components - projected.shape[1]))])
        offset = 0
        for domain, block in zip(domains, blocks):
            frame = pd.DataFrame(projected[offset:offset + block.shape[0]],
                                 columns=[f'c{i}' for i in range(n_components)])
            frame.insert(0, 'kind', kind)
            frame.insert(0, 'meta', domain.meta)
            frame.insert(0, 'role', domain.role.value)
            frame.insert(0, 'domain_id', domain.domain_id)
            frames.append(frame)
            offset += block.shape[0]
    return pd.concat(frames, ignore_index=True)

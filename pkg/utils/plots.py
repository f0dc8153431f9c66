"""SVG diagnostics drawn from training histories."""
import io
import logging
import os
import re

import matplotlib
import pandas as pd

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from utils.errors import DataError  # noqa: E402

logger = logging.getLogger('utils.plots')

SVG_RC = {'svg.hashsalt': 'rlcda', 'svg.fonttype': 'path'}
DOMAIN_COLORS = plt.get_cmap('viridis')


def _fmt(value):
    return 'nan' if value is None else f'{value:.6g}'


def _save_svg(fig, out_path, description):
    """Save without timestamps or external references so reruns are byte-identical."""
    buffer = io.StringIO()
    with plt.rc_context(SVG_RC):
        fig.savefig(buffer, format='svg',
                    metadata={'Date': None, 'Creator': None, 'Type': None, 'Description': description})
    plt.close(fig)
    text = re.sub(r'<!DOCTYPE[^>]*>\s*', '', buffer.getvalue())

    directory = os.path.dirname(str(out_path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out_path, 'w', newline='\n') as f:
        f.write(text)
    logger.info(f"Wrote {out_path}")
    return out_path


def _label(meta, domain_id):
    return f'{meta:g}' if meta is not None else str(domain_id)


def emit_selection_heatmap(history, out_path):
    """Intermediate domains (rows) by epochs (columns), shaded by selection order.

    Unselected cells are white; selected cells run light to dark with the
    position of the domain in the epoch's path.
    """
    if len(history) == 0:
        raise DataError("Cannot plot an empty history")
    matrix = history.selection_matrix()
    first = history.records[0]
    n_domains, n_epochs = matrix.shape
    longest = max(1, int(matrix.max()))
    cmap = plt.get_cmap('Blues')

    fig, ax = plt.subplots(figsize=(max(4.0, 0.12 * n_epochs + 2.0), max(2.5, 0.4 * n_domains + 1.0)))
    for row in range(n_domains):
        for col in range(n_epochs):
            order = int(matrix[row, col])
            color = 'white' if order == 0 else cmap(0.3 + 0.7 * (order - 1) / max(1, longest - 1))
            ax.add_patch(Rectangle((col, row), 1.0, 1.0, facecolor=color, edgecolor='#dddddd',
                                   linewidth=0.3, gid=f'cell-{row}-{col}'))
    ax.set_xlim(0, n_epochs)
    ax.set_ylim(0, n_domains)
    ax.set_yticks([row + 0.5 for row in range(n_domains)])
    ax.set_yticklabels([_label(m, d) for m, d in zip(first.intermediate_meta, first.intermediates)])
    ax.set_xlabel('Epoch')
    ax.set_ylabel('Intermediate domain')
    ax.set_title('Domain selection order')

    rows_text = ';'.join(' '.join(str(int(v)) for v in matrix[row]) for row in range(n_domains))
    return _save_svg(fig, out_path, f'selection rows={n_domains} cols={n_epochs} values={rows_text}')


def emit_reward_curve(histories, out_path):
    """Mean cumulative reward per epoch, one line per history.

    Args:
        histories: TrainingHistory, or a dict of label -> TrainingHistory
        out_path: Destination .svg file
    """
    if not isinstance(histories, dict):
        histories = {'run': histories}
    if not histories or any(len(h) == 0 for h in histories.values()):
        raise DataError("Cannot plot an empty history")

    fig, ax = plt.subplots(figsize=(8, 4.5))
    lines = []
    for label, history in histories.items():
        epochs = [record.epoch for record in history]
        rewards = history.mean_cumulative_rewards
        ax.plot(epochs, rewards, label=label, linewidth=1.2, gid=f'reward-{label}')
        lines.append(f"{label}: {' '.join(_fmt(v) for v in rewards)}")
    ax.set_xlabel('Epoch')
    ax.set_ylabel('Mean cumulative reward')
    ax.set_title('Reward per epoch')
    ax.grid(True, alpha=0.3)
    if len(histories) > 1:
        ax.legend()
    return _save_svg(fig, out_path, '\n'.join(lines))


def emit_feature_projection(frame, out_path):
    """3-D scatter of projected specific and invariant features, colored by domain.

    Args:
        frame: Output of ``core.trainer.project_features``
        out_path: Destination .svg file
    """
    if frame.empty:
        raise DataError("Cannot plot an empty projection")
    domain_ids = sorted(frame['domain_id'].unique())
    fig = plt.figure(figsize=(11, 5))
    for index, kind in enumerate(('specific', 'invariant')):
        ax = fig.add_subplot(1, 2, index + 1, projection='3d')
        part = frame[frame['kind'] == kind]
        for position, domain_id in enumerate(domain_ids):
            rows = part[part['domain_id'] == domain_id]
            meta = rows['meta'].iloc[0] if len(rows) else None
            color = DOMAIN_COLORS(position / max(1, len(domain_ids) - 1))
            label = _label(None if pd.isna(meta) else meta, domain_id)
            ax.scatter(rows['c0'], rows['c1'], rows['c2'], s=4, color=color, label=label,
                       gid=f'features-{kind}-{domain_id}')
        ax.set_title(f'{kind.capitalize()} features')
    fig.axes[0].legend(fontsize=6, markerscale=2, loc='upper left')
    counts = frame.groupby(['kind', 'domain_id']).size()
    description = ' '.join(f'{kind}/{domain_id}={count}' for (kind, domain_id), count in counts.items())
    return _save_svg(fig, out_path, description)

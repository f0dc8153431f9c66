"""Synthetic rotating-domain benchmarks.

Each generator draws one latent sample per row (class and, for moons, the
position along the class manifold) and then, per domain, rotates it by the
domain angle and adds fresh Gaussian noise. Row ``j`` of every domain is the
same latent object seen under a different rotation.
"""
import logging

import numpy as np

from data.domains import DomainDataset, DomainRole
from utils.errors import ConfigurationError
from utils.seeding import make_rng, spawn

logger = logging.getLogger('data.synthetic')

GAUSSIAN_CENTERS = np.array([[1.0, 0.0], [-1.0, 0.0]])
# Centroid of the two unrotated half-circles, so rotations pivot on the data
MOONS_OFFSET = np.array([0.5, 0.25])


def rotation_matrix(angle_degrees):
    theta = np.deg2rad(angle_degrees)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate(points, angle_degrees):
    """Rotate 2-D row vectors counter-clockwise by ``angle_degrees``."""
    return np.asarray(points, dtype=np.float64) @ rotation_matrix(angle_degrees).T


def _check_arguments(n_per_domain, angles, noise_sd):
    if len(angles) < 3:
        raise ConfigurationError(
            f"Need at least 3 angles (source, intermediates, target), got {len(angles)}")
    if n_per_domain < 1:
        raise ConfigurationError(f"n_per_domain must be >= 1, got {n_per_domain}")
    if noise_sd <= 0:
        raise ConfigurationError(f"noise_sd must be positive, got {noise_sd}")


def _balanced_classes(n, rng):
    return rng.permutation(np.arange(n) % 2)


def _role(index, count):
    if index == 0:
        return DomainRole.SOURCE
    if index == count - 1:
        return DomainRole.TARGET
    return DomainRole.INTERMEDIATE


def _rotated_domains(base_points, classes, angles, noise_sd, noise_rngs):
    domains = []
    for index, (angle, rng) in enumerate(zip(angles, noise_rngs)):
        role = _role(index, len(angles))
        points = rotate(base_points, angle) + rng.normal(0.0, noise_sd, size=base_points.shape)
        domains.append(DomainDataset(
            domain_id=index,
            role=role,
            features=points,
            labels=classes if role == DomainRole.SOURCE else None,
            meta=float(angle),
            eval_labels=classes,
        ))
    return domains


def generate_rotated_gaussians(n_per_domain, angles, noise_sd, seed):
    """Two Gaussian classes centered at (1, 0) and (-1, 0), rotated per domain.

    The first angle is the source domain, the last the target, the rest are
    intermediates. ``meta`` holds the angle in degrees.
    """
    _check_arguments(n_per_domain, angles, noise_sd)
    latent_rng, *noise_rngs = spawn(make_rng(seed), len(angles) + 1)
    classes = _balanced_classes(n_per_domain, latent_rng)
    base = GAUSSIAN_CENTERS[classes]
    domains = _rotated_domains(base, classes, angles, noise_sd, noise_rngs)
    logger.info(f"Generated {len(domains)} rotated Gaussian domains ({n_per_domain} rows each)")
    return domains


def generate_rotated_moons(n_per_domain, angles, noise_sd, seed):
    """Two interleaved half-circles, rotated per domain."""
    _check_arguments(n_per_domain, angles, noise_sd)
    latent_rng, *noise_rngs = spawn(make_rng(seed), len(angles) + 1)
    classes = _balanced_classes(n_per_domain, latent_rng)
    t = latent_rng.uniform(0.0, np.pi, size=n_per_domain)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    base = np.where(classes[:, None] == 0, upper, lower) - MOONS_OFFSET
    domains = _rotated_domains(base, classes, angles, noise_sd, noise_rngs)
    logger.info(f"Generated {len(domains)} rotated moons domains ({n_per_domain} rows each)")
    return domains


GENERATORS = {
    'gaussians': generate_rotated_gaussians,
    'moons': generate_rotated_moons,
}

"""Synthetic functional datasets with known structure."""

import numpy as np

from funnol.dataset import Dataset
from funnol.fpca import trapezoid_weights
from funnol.seeding import derive_rng


def sincos_classes(n=200, J=30, noise_sd=0.3, seed=0):
    """Two balanced classes of bivariate curves on [0, 1].

    Class 0 follows (sin 2pi t, cos 2pi t), class 1 (cos 2pi t, sin 2pi t);
    each curve gets a random amplitude in [0.8, 1.2] and i.i.d. N(0, noise_sd^2)
    errors.
    """
    rng = derive_rng(seed, "sincos")
    t = np.linspace(0.0, 1.0, J)
    s, c = np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)
    labels = np.arange(n) % 2
    values = np.empty((n, J, 2))
    amp = rng.uniform(0.8, 1.2, n)
    for i, y in enumerate(labels):
        first, second = (s, c) if y == 0 else (c, s)
        values[i, :, 0] = amp[i] * first
        values[i, :, 1] = amp[i] * second
    values += rng.normal(0.0, noise_sd, values.shape)
    return Dataset.from_arrays(values, labels, grid=t, num_classes=2)


def orthonormal_basis(grid, k, channels=1):
    """k functions on the (concatenated) grid, orthonormal under trapezoid weights.

    Built from shifted Legendre-like polynomials by weighted Gram-Schmidt.
    """
    grid = np.asarray(grid, dtype=np.float64)
    w = np.tile(trapezoid_weights(grid), channels)
    u = np.tile((grid - grid[0]) / (grid[-1] - grid[0]) * 2 - 1, channels)
    cols = []
    for p in range(k):
        v = np.cos(np.pi * p * (u + 1) / 2)
        for b in cols:
            v = v - np.sum(w * v * b) * b
        v = v / np.sqrt(np.sum(w * v * v))
        cols.append(v)
    return np.column_stack(cols)


def known_fpc_curves(n=500, J=50, variances=(4.0, 1.0, 0.25), seed=0):
    """Curves x_i = sum_k a_ik phi_k with a_ik ~ N(0, variances[k]).

    Returns (dataset, basis (J, K), scores (n, K)).
    """
    grid = np.linspace(0.0, 1.0, J)
    phi = orthonormal_basis(grid, len(variances))
    rng = derive_rng(seed, "fpc")
    scores = rng.standard_normal((n, len(variances))) * np.sqrt(np.asarray(variances))
    values = scores @ phi.T
    labels = (scores[:, 0] > 0).astype(int)
    return Dataset.from_arrays(values, labels, grid=grid, num_classes=2), phi, scores

"""Discretised functional PCA on a common grid.

Multivariate curves are joined end to end (channel 0 over the grid, then
channel 1, ...) and treated as a single long curve. Inner products use
trapezoid weights, so eigenfunctions are orthonormal in the weighted sense
<a, b>_w = sum_k w_k a_k b_k.
"""

from dataclasses import dataclass

import numpy as np

from funnol.dataset import FunctionalSample
from funnol.linalg import sym_eigen


@dataclass(frozen=True)
class FpcaModel:
    grid: np.ndarray
    quad_weights: np.ndarray      # (J*D,) trapezoid weights repeated per channel
    mean: np.ndarray              # (J*D,)
    eigenvalues: np.ndarray       # (K,)
    eigenfunctions: np.ndarray    # (J*D, K)
    num_channels: int
    all_eigenvalues: np.ndarray | None = None

    @property
    def K(self):
        return self.eigenvalues.size

    @property
    def J(self):
        return self.grid.size

    def truncate(self, k):
        return FpcaModel(self.grid, self.quad_weights, self.mean, self.eigenvalues[:k],
                         self.eigenfunctions[:, :k], self.num_channels, self.all_eigenvalues)


def trapezoid_weights(grid):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 1:
        return np.ones(1)
    h = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def flatten_sample(sample):
    """Channel-major concatenation of a (J, D) curve into a J*D vector."""
    values = sample.values if hasattr(sample, "values") else np.asarray(sample)
    return np.asarray(values, dtype=np.float64).T.reshape(-1)


def unflatten(vec, J, D):
    return np.asarray(vec).reshape(D, J).T


def impute_linear(sample, grid=None):
    """Fill unobserved cells by linear interpolation along the grid.

    Ends are extrapolated flat. Needs at least two observed points per channel.
    """
    J, D = sample.values.shape
    t = np.arange(J, dtype=np.float64) if grid is None else np.asarray(grid, dtype=np.float64)
    if sample.mask.all():
        return sample
    out = np.array(sample.values)
    for d in range(D):
        obs = sample.mask[:, d]
        if obs.sum() < 2:
            raise ValueError(f"channel {d} has {int(obs.sum())} observed points; need 2")
        out[:, d] = np.interp(t, t[obs], sample.values[obs, d])
    return FunctionalSample(out, np.ones_like(sample.mask), sample.label)


def impute_dataset(ds):
    if ds.mask_array().all():
        return ds
    return ds.replace_samples([impute_linear(s, ds.grid) for s in ds.samples])


def _data_matrix(ds):
    return np.stack([flatten_sample(s) for s in ds.samples])


def fpca_fit(train, K):
    """Fit mean and top-K eigenfunctions of the sample covariance (ddof=1).

    Curves must be fully observed; run ``impute_dataset`` first otherwise.
    """
    N = len(train)
    if N < 2:
        raise ValueError("FPCA needs at least two curves")
    if not train.mask_array().all():
        raise ValueError("FPCA needs fully observed curves; impute first")
    P = train.J * train.D
    if not 1 <= K <= P:
        raise ValueError(f"K must lie in 1..{P}")
    X = _data_matrix(train)
    mean = X.mean(axis=0)
    Xc = X - mean
    w = np.tile(trapezoid_weights(train.grid), train.D)
    sw = np.sqrt(w)
    # W^1/2 C W^1/2 via the weighted data matrix keeps the product symmetric
    Y = Xc * sw
    S = (Y.T @ Y) / (N - 1)
    lam, vecs = sym_eigen(S)
    lam = np.where(lam < 0.0, 0.0, lam)
    phi = vecs / sw[:, None]
    # deterministic sign: largest-magnitude entry of each eigenfunction positive
    pivot = np.argmax(np.abs(phi), axis=0)
    phi = phi * np.sign(phi[pivot, np.arange(P)])
    return FpcaModel(np.array(train.grid), w, mean, lam[:K], phi[:, :K], train.D, lam)


def fpc_scores(model, sample):
    """Quadrature inner products of the centred curve with each eigenfunction."""
    x = flatten_sample(sample) if np.ndim(getattr(sample, "values", sample)) == 2 \
        else np.asarray(sample, dtype=np.float64)
    return ((x - model.mean) * model.quad_weights) @ model.eigenfunctions


def fpc_scores_dataset(model, ds):
    X = _data_matrix(ds)
    return ((X - model.mean) * model.quad_weights) @ model.eigenfunctions


def fpca_reconstruct(model, scores):
    """mean + sum_k scores_k phi_k as a flat J*D vector."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[-1] != model.K:
        raise ValueError(f"expected {model.K} scores, got {scores.shape[-1]}")
    return model.mean + scores @ model.eigenfunctions.T

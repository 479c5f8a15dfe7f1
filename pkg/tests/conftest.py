import numpy as np
import pytest

from funnol.dataset import Dataset
from funnol.model import init_params


def finite_difference(loss_fn, params, eps=1e-5):
    """Central differences of ``loss_fn(params)`` for every matrix entry."""
    grads = {}
    for name, a in params.matrices.items():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + eps
            up = loss_fn(params)
            a[idx] = old - eps
            down = loss_fn(params)
            a[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for name in analytic:
        a, n = analytic[name], numeric[name]
        err = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(err <= floor, 0.0, err / np.where(scale > 0, scale, 1.0))
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst


def random_problem(cell, seed, J=7, D=2, L=3, Q=2, B=3, weight_sd=0.7, miss=0.2):
    rng = np.random.default_rng(seed)
    params = init_params(D, L, Q, cell, seed)
    for k in params.matrices:
        params.matrices[k] = rng.normal(0.0, weight_sd, params.matrices[k].shape)
    x = rng.normal(size=(B, J, D))
    mask = rng.random((B, J, D)) > miss
    x = np.where(mask, x, 0.0)
    labels = rng.integers(0, Q, B)
    return params, x, mask, labels


@pytest.fixture
def two_line_file(tmp_path):
    p = tmp_path / "two.tsv"
    p.write_text("1\t0.0\t0.5\n2\t1.0\t1.5\n")
    return p


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(3)
    values = rng.normal(size=(12, 9, 2))
    labels = np.arange(12) % 3
    return Dataset.from_arrays(values, labels, num_classes=3)


# one status line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])

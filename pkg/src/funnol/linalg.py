"""Dense linear algebra and activation kernels.

Matrices and vectors are plain float64 numpy arrays. Everything here is a
pure function of its inputs.
"""

import numpy as np


class ConvergenceError(ArithmeticError):
    """An iterative routine stopped before reaching its tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def matvec(a, v):
    a = as_matrix(a)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {v.shape}")
    return a @ v


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def sigmoid(x):
    # tanh form: overflow-free and exact at 0
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def identity(x):
    return np.array(x, dtype=np.float64, copy=True)


def softmax(x):
    """Softmax over the last axis, max-shifted."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class Activation:
    """An activation together with its backward rule.

    ``backward(out, upstream)`` maps dL/d(output) to dL/d(pre-activation)
    given the forward output. For elementwise activations ``derivative``
    returns g'(pre) directly.
    """

    elementwise = True

    def __init__(self, name, fn, dfn_from_out):
        self.name = name
        self.fn = fn
        self._dfn = dfn_from_out

    def __call__(self, x):
        return self.fn(x)

    def __repr__(self):
        return f"Activation({self.name!r})"

    def derivative(self, x):
        return self._dfn(self.fn(x))

    def derivative_from_output(self, out):
        return self._dfn(out)

    def backward(self, out, upstream):
        return self._dfn(out) * upstream


class _Softmax(Activation):
    elementwise = False

    def __init__(self):
        super().__init__("softmax", softmax, None)

    def jacobian(self, x):
        s = softmax(x)
        return np.diag(s) - np.outer(s, s)

    def derivative(self, x):
        # diagonal of the Jacobian; use backward() for the full product
        s = softmax(x)
        return s * (1.0 - s)

    def derivative_from_output(self, out):
        return out * (1.0 - out)

    def backward(self, out, upstream):
        return out * (upstream - np.sum(upstream * out, axis=-1, keepdims=True))


ACTIVATIONS = {
    "sigmoid": Activation("sigmoid", sigmoid, lambda s: s * (1.0 - s)),
    "tanh": Activation("tanh", tanh, lambda t: 1.0 - t * t),
    "identity": Activation("identity", identity, np.ones_like),
    "softmax": _Softmax(),
}


def get_activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def euclidean(v):
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(np.sum(v * v)))


def frobenius(a):
    a = as_matrix(a)
    return float(np.sqrt(np.sum(a * a)))


def spectral(a, tol=1e-10, max_iter=1000, seed=0):
    """Largest singular value by power iteration on A^T A.

    The start vector is drawn from a fixed seed so the result is
    deterministic. Raises ConvergenceError (with ``estimate``) if the
    relative change never drops below ``tol``.
    """
    a = as_matrix(a)
    if a.size == 0:
        return 0.0
    fro = frobenius(a)
    if fro == 0.0:
        return 0.0
    # scale to unit Frobenius norm so large entries cannot overflow
    b = a / fro
    ata = b.T @ b
    v = np.random.default_rng(seed).standard_normal(ata.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = ata @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector landed in the null space; restart deterministically
            v = np.ones(ata.shape[0]) / np.sqrt(ata.shape[0])
            continue
        new = float(np.sqrt(v @ w))
        v = w / nw
        if abs(new - est) <= tol * new:
            return new * fro
        est = new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        estimate=est * fro,
    )


# ---------------------------------------------------------------------------
# symmetric eigensolver
# ---------------------------------------------------------------------------

def _round_robin(n):
    """Pairings for a parallel Jacobi sweep (tournament ordering).

    Yields n-1 (or n for odd n) rounds, each a set of disjoint index pairs,
    so that every pair (p, q) appears exactly once per sweep.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        if pairs:
            rounds.append(np.array(pairs, dtype=np.intp))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def sym_eigen(s, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations within a sweep are grouped into disjoint pairs and applied
    together, which keeps the cost per sweep at O(n^3) numpy work instead of
    O(n^2) Python-level rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues descending and
    eigenvectors as the columns of an orthogonal matrix.
    """
    s = as_matrix(s)
    n, m = s.shape
    if n != m:
        raise ValueError(f"sym_eigen needs a square matrix, got {s.shape}")
    a = 0.5 * (s + s.T)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    scale = max(frobenius(a), np.finfo(float).tiny)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for pairs in rounds:
            p, q = pairs[:, 0], pairs[:, 1]
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = a[p, p], a[q, q]
            theta = (aqq - app) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c
            # A <- R^T A R with R the block rotation for all pairs at once
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - sn * aq
            a[:, q] = sn * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - sn[:, None] * aq
            a[q, :] = sn[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - sn * vq
            v[:, q] = sn * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = a.diagonal().copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]

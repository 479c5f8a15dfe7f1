"""Downstream evaluation of learned representations.

Representations (FunNoL features or FPC scores) are fed to a multinomial
logistic regression; repeated random splits give accuracy distributions.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from funnol.corruption import CorruptionConfig
from funnol.dataset import SplitSpec, downsample, split_indices, standardize
from funnol.fpca import fpc_scores_dataset, fpca_fit, impute_dataset
from funnol.linalg import frobenius, softmax, spectral
from funnol.model import LSTM, encode_dataset
from funnol.seeding import derive_seed
from funnol.train import TrainConfig, fit

METHODS = ("funnol_c", "funnol_nc", "fpca")


# ---------------------------------------------------------------------------
# multinomial logistic regression
# ---------------------------------------------------------------------------

@dataclass
class LogisticModel:
    coefficients: np.ndarray   # (Q, L+1); column 0 is the intercept
    classes: int
    converged: bool = True
    iterations: int = 0


def _logreg_objective(theta, X1, Y, l2):
    # theta (Q, P+1); intercept column unpenalised
    logits = X1 @ theta.T
    logits -= logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits).sum(axis=1))
    n = X1.shape[0]
    nll = (lse - np.sum(logits * Y, axis=1)).mean()
    pen = 0.5 * l2 * np.sum(theta[:, 1:] ** 2)
    P = np.exp(logits - lse[:, None])
    grad = (P - Y).T @ X1 / n
    grad[:, 1:] += l2 * theta[:, 1:]
    return nll + pen, grad


def logreg_fit(Z, labels, l2=1e-4, num_classes=None, tol=1e-6, max_iter=5000):
    """Ridge-penalised multinomial logistic regression.

    Columns of Z are centred and scaled internally (constant columns are
    left unscaled), the penalised likelihood is maximised by gradient
    descent with Barzilai-Borwein trial steps and Armijo backtracking, and
    the coefficients are mapped back to the original feature scale.
    Stops when the gradient norm falls below ``tol`` or after ``max_iter``
    iterations; in the latter case ``converged`` is False and a
    RuntimeWarning is issued.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    labels = np.asarray(labels, dtype=int)
    N, P = Z.shape
    Q = int(num_classes if num_classes is not None else labels.max() + 1)
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    if N < Q:
        raise ValueError(f"need at least as many samples ({N}) as classes ({Q})")
    mu = Z.mean(axis=0)
    sd = Z.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    X1 = np.hstack([np.ones((N, 1)), (Z - mu) / sd])
    Y = np.zeros((N, Q))
    Y[np.arange(N), labels] = 1.0

    theta = np.zeros((Q, P + 1))
    f, g = _logreg_objective(theta, X1, Y, l2)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gn = np.sqrt(np.sum(g * g))
        if gn < tol:
            converged = True
            it -= 1
            break
        t = step
        while True:
            cand = theta - t * g
            fc, gc = _logreg_objective(cand, X1, Y, l2)
            if fc <= f - 0.5 * t * gn * gn or t < 1e-14:
                break
            t *= 0.5
        s, yv = cand - theta, gc - g
        sy = np.sum(s * yv)
        step = np.sum(s * s) / sy if sy > 1e-300 else 1.0
        theta, f, g = cand, fc, gc
    else:
        converged = np.sqrt(np.sum(g * g)) < tol
        if not converged:
            warnings.warn(f"logistic regression stopped after {max_iter} iterations "
                          f"(gradient norm {np.sqrt(np.sum(g * g)):.3g})", RuntimeWarning,
                          stacklevel=2)

    coef = np.empty_like(theta)
    coef[:, 1:] = theta[:, 1:] / sd
    coef[:, 0] = theta[:, 0] - coef[:, 1:] @ mu
    return LogisticModel(coef, Q, bool(converged), it)


def logreg_predict(model, z):
    """Class probabilities and argmax label (lowest index wins ties).

    Accepts one feature vector or an (N, L) matrix.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    logits = model.coefficients[:, 0] + Z @ model.coefficients[:, 1:].T
    probs = softmax(logits)
    lab = np.argmax(logits, axis=1)
    return (probs[0], int(lab[0])) if single else (probs, lab)


def accuracy(pred, labels):
    pred, labels = np.asarray(pred), np.asarray(labels)
    return float(np.mean(pred == labels)) if labels.size else float("nan")


# ---------------------------------------------------------------------------
# margin loss and the norm-ratio diagnostic
# ---------------------------------------------------------------------------

def empirical_margin_loss(scores, labels, gamma):
    """Share of rows whose true-class score is <= gamma + best rival score."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n = np.arange(scores.shape[0])
    true = scores[n, labels]
    rival = scores.copy()
    rival[n, labels] = -np.inf
    return float(np.mean(true <= gamma + rival.max(axis=1)))


def norm_ratio(a):
    """Squared spectral over squared Frobenius norm."""
    fro = frobenius(a)
    if fro == 0.0:
        raise ValueError("norm ratio undefined for a zero matrix")
    return spectral(a) ** 2 / fro ** 2


def bound_diagnostic(params, gamma, k=None, h=(1.0, 1.0, 1.0, 1.0)):
    """Capacity term of the margin generalisation bound, up to its constants.

    Computes ``k ln k / gamma^2 * sum_A h_A ||A||^2 / ||A||_F^2`` over
    A in (M, V, W, U), with ``h`` the per-matrix constants (ordered M, V, W,
    U) whose values are not pinned down and default to 1. ``k`` defaults
    to the feature dimension. For an LSTM encoder the candidate-path
    matrices W_m, U_m stand in for W, U and a warning is issued.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if params.cell_kind == LSTM:
        warnings.warn("LSTM encoder: using W_m, U_m in place of W, U (heuristic)",
                      RuntimeWarning, stacklevel=2)
        W, U = params["W_m"], params["U_m"]
    else:
        W, U = params["W"], params["U"]
    k = params.L if k is None else k
    ratios = [norm_ratio(a) for a in (params["M"], params["V"], W, U)]
    return float(k * math.log(k) / gamma ** 2 * sum(hh * r for hh, r in zip(h, ratios)))


# ---------------------------------------------------------------------------
# protocols
# ---------------------------------------------------------------------------

@dataclass
class ProtocolConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    fpca_k: int | None = None          # defaults to train.latent_dim
    train_fraction: float = 0.7
    l2: float = 1e-4
    seed: int = 0
    threads: int = 1

    @property
    def k(self):
        return self.fpca_k if self.fpca_k is not None else self.train.latent_dim


@dataclass
class ProtocolResult:
    method: str
    accuracies: list
    keep_fraction: float = 1.0
    train_fraction: float = 0.7
    seed: int = 0

    @property
    def splits(self):
        return len(self.accuracies)

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def se(self):
        if self.splits < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1) / np.sqrt(self.splits))

    def summary(self):
        return {"method": self.method, "mean": self.mean, "se": self.se,
                "splits": self.splits, "keep_fraction": self.keep_fraction,
                "train_fraction": self.train_fraction, "seed": self.seed}


def representations(method, train, test, cfg, split_index=0):
    """Fit a representation on ``train``; return (Z_train, Z_test, fitted)."""
    if method == "fpca":
        tr, te = impute_dataset(train), impute_dataset(test)
        model = fpca_fit(tr, cfg.k)
        return fpc_scores_dataset(model, tr), fpc_scores_dataset(model, te), model
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    tr, te, _ = standardize(train, test)
    corruption = None
    if method == "funnol_c":
        corruption = replace(cfg.corruption,
                             seed=derive_seed(cfg.seed, "corrupt", split_index))
    tcfg = replace(cfg.train, corruption=corruption,
                   seed=derive_seed(cfg.seed, "train", split_index))
    params, _ = fit(tr, tcfg)
    return encode_dataset(params, tr), encode_dataset(params, te), params


def run_one_split(ds, method, cfg, split_index):
    spec = SplitSpec(cfg.train_fraction, derive_seed(cfg.seed, "split", split_index))
    tr_idx, te_idx = split_indices(ds, spec)
    assert not set(tr_idx) & set(te_idx), "train and test overlap"
    train, test = ds.subset(tr_idx), ds.subset(te_idx)
    try:
        ztr, zte, _ = representations(method, train, test, cfg, split_index)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lm = logreg_fit(ztr, train.labels, cfg.l2, ds.num_classes)
    except Exception as exc:
        raise RuntimeError(f"split {split_index}: {exc}") from exc
    _, pred = logreg_predict(lm, zte)
    return accuracy(pred, test.labels)


def run_split_protocol(ds, method, splits, cfg=None, keep_fraction=1.0):
    """Repeated random splits; each split fits, represents and classifies anew."""
    cfg = cfg or ProtocolConfig()
    if splits < 1:
        raise ValueError("splits must be >= 1")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")

    def one(i):
        return run_one_split(ds, method, cfg, i)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            accs = list(pool.map(one, range(splits)))
    else:
        accs = [one(i) for i in range(splits)]
    return ProtocolResult(method, accs, keep_fraction, cfg.train_fraction, cfg.seed)


def _fraction_key(kf):
    return int(round(kf * 1_000_000))


def run_sparsity_experiment(ds, method, keep_fractions, splits, cfg=None):
    """One split protocol per keep fraction on a randomly thinned copy of ``ds``."""
    cfg = cfg or ProtocolConfig()
    out = []
    for kf in keep_fractions:
        if not 0.0 < kf <= 1.0:
            raise ValueError(f"keep fraction {kf} outside (0, 1]")
        thinned = downsample(ds, kf, derive_seed(cfg.seed, "downsample", _fraction_key(kf)))
        out.append(run_split_protocol(thinned, method, splits, cfg, keep_fraction=kf))
    return out

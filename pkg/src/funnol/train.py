"""Joint reconstruction + classification training with hand-written BPTT."""

import time
from dataclasses import dataclass, field

import numpy as np

from funnol.corruption import CorruptionConfig, corrupt_batch
from funnol.linalg import spectral
from funnol.model import LSTM, SIMPLE_RNN, forward_batch, init_params
from funnol.seeding import derive_rng

PROB_FLOOR = 1e-12
CLIP_MODES = ("rescale_to_threshold", "rescale_to_unit")
OPTIMIZERS = ("adam", "sgd")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    latent_dim: int = 8
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    clip_threshold: float = 5.0
    clip_mode: str = "rescale_to_threshold"
    lambda_recon: float = 1.0
    corruption: CorruptionConfig | None = None
    optimizer: str = "adam"
    cell_kind: str = LSTM
    seed: int = 0
    activations: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite and non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.clip_threshold > 0:
            raise ValueError("clip_threshold must be positive")
        if self.clip_mode not in CLIP_MODES:
            raise ValueError(f"clip_mode must be one of {CLIP_MODES}")
        if self.lambda_recon < 0 or not np.isfinite(self.lambda_recon):
            raise ValueError("lambda_recon must be finite and non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.cell_kind not in (SIMPLE_RNN, LSTM):
            raise ValueError(f"cell_kind must be {SIMPLE_RNN!r} or {LSTM!r}")


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    loss_c: list = field(default_factory=list)
    loss_r: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    clipped: list = field(default_factory=list)
    wall_time: float = 0.0

    def rows(self):
        return [(e + 1, self.loss[e], self.loss_c[e], self.loss_r[e], self.grad_norm[e],
                 self.clipped[e]) for e in range(len(self.loss))]

    header = ("epoch", "loss", "loss_c", "loss_r", "grad_norm", "clipped")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def recon_loss(sample_or_values, x_hat, mask=None):
    """Mean over time of the squared error, counting observed cells only."""
    if mask is None:
        values, mask = sample_or_values.values, sample_or_values.mask
    else:
        values = sample_or_values
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if values.ndim == 1:
        values, mask = values[:, None], mask[:, None]
    x_hat = x_hat.reshape(values.shape)
    resid = np.where(mask, values - x_hat, 0.0)
    return float(np.sum(resid * resid) / values.shape[0])


def class_loss(y_true, y_prob):
    """Cross-entropy with the probability floored at 1e-12."""
    return float(-np.log(max(float(y_prob[y_true]), PROB_FLOOR)))


def _batch_losses(trace, target, target_mask, labels):
    J = target.shape[1]
    resid = np.where(target_mask, target - trace.x_hat, 0.0)
    lr = np.sum(resid * resid, axis=(1, 2)) / J
    p = trace.y[np.arange(len(labels)), labels]
    lc = -np.log(np.maximum(p, PROB_FLOOR))
    return lc, lr, resid


def total_loss(params, values, mask, labels, lambda_recon=1.0, inputs=None):
    """Mean classification loss plus lambda times mean reconstruction loss.

    ``inputs`` are what the encoder sees (e.g. a corrupted copy); the
    reconstruction target is always ``values`` under ``mask``.
    """
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    values = np.where(mask, values, 0.0)
    enc_in = values if inputs is None else inputs
    trace = forward_batch(params, enc_in)
    lc, lr, _ = _batch_losses(trace, values, mask, np.asarray(labels))
    return float(lc.mean() + lambda_recon * lr.mean())


# ---------------------------------------------------------------------------
# backpropagation through time
# ---------------------------------------------------------------------------

def backward(trace, params, target, target_mask, labels, lambda_recon=1.0):
    """Exact gradient of the batch-mean loss with respect to every matrix.

    Returns ``(grads, (loss, loss_c, loss_r))``. ``target``/``target_mask``
    are the uncorrupted curves; ``trace`` is the forward pass on the
    (possibly corrupted) encoder inputs.
    """
    target = np.where(target_mask, target, 0.0)
    labels = np.asarray(labels)
    B, J, D = trace.x.shape
    L = params.L
    lc, lr, resid = _batch_losses(trace, target, target_mask, labels)
    g = params.zeros_like()

    # classifier head
    p = trace.y[np.arange(B), labels]
    dy = np.zeros_like(trace.y)
    alive = p > PROB_FLOOR
    dy[np.arange(B)[alive], labels[alive]] = -1.0 / (B * p[alive])
    dy_pre = params.act("class").backward(trace.y, dy)
    g["M"] = dy_pre.T @ trace.z
    dz = dy_pre @ params["M"]

    # decoder, unrolled backwards
    if lambda_recon != 0.0:
        dxh = (-2.0 * lambda_recon / (B * J)) * resid          # (B, J, D)
        dout = params.act("output").backward(trace.x_hat, dxh).transpose(1, 0, 2)
        g["G"] = np.einsum("jbd,jbl->dl", dout, trace.dec_h[1:])
        dh_all = np.einsum("jbd,dl->jbl", dout, params["G"])
        g_d = params.act("decoder_hidden")
        Ud = params["Ud"]
        carry = np.zeros((B, L))
        dpre = np.empty((J, B, L))
        for j in range(J - 1, -1, -1):
            dpre[j] = g_d.backward(trace.dec_h[j + 1], dh_all[j] + carry)
            carry = dpre[j] @ Ud
        g["Ud"] = np.einsum("jbl,jbk->lk", dpre, trace.dec_h[:-1])
        dsum = dpre.sum(axis=0)
        g["Wd"] = dsum.T @ trace.z
        dz = dz + dsum @ params["Wd"]

    # feature head
    dz_pre = params.act("feature").backward(trace.z, dz)
    g["V"] = dz_pre.T @ trace.enc_h[J]
    dh = dz_pre @ params["V"]

    x = trace.x.transpose(1, 0, 2)    # (J, B, D)
    if params.cell_kind == SIMPLE_RNN:
        g_h = params.act("hidden")
        U = params["U"]
        dpre = np.empty((J, B, L))
        for j in range(J - 1, -1, -1):
            dpre[j] = g_h.backward(trace.enc_h[j + 1], dh)
            dh = dpre[j] @ U
        g["W"] = np.einsum("jbl,jbd->ld", dpre, x)
        g["U"] = np.einsum("jbl,jbk->lk", dpre, trace.enc_h[:-1])
    else:
        Uc = np.concatenate([params[f"U_{k}"] for k in "iofm"], axis=0)
        dm = np.zeros((B, L))
        dpre = np.empty((J, B, 4 * L))
        for j in range(J - 1, -1, -1):
            gt = trace.gates[j]
            i, o, f, mt = gt[:, :L], gt[:, L:2 * L], gt[:, 2 * L:3 * L], gt[:, 3 * L:]
            m, m_prev = trace.enc_m[j + 1], trace.enc_m[j]
            tm = np.tanh(m)
            dm = dm + dh * o * (1.0 - tm * tm)
            dpre[j, :, :L] = dm * mt * i * (1.0 - i)
            dpre[j, :, L:2 * L] = dh * tm * o * (1.0 - o)
            dpre[j, :, 2 * L:3 * L] = dm * m_prev * f * (1.0 - f)
            dpre[j, :, 3 * L:] = dm * i * (1.0 - mt * mt)
            dm = dm * f
            dh = dpre[j] @ Uc
        gW = np.einsum("jbk,jbd->kd", dpre, x)
        gU = np.einsum("jbk,jbl->kl", dpre, trace.enc_h[:-1])
        for n, k in enumerate("iofm"):
            g[f"W_{k}"] = gW[n * L:(n + 1) * L]
            g[f"U_{k}"] = gU[n * L:(n + 1) * L]

    for name, a in g.items():
        if not np.all(np.isfinite(a)):
            raise TrainingError(f"non-finite gradient in parameter block {name}")
    lam_lr = lambda_recon * lr.mean() if lambda_recon != 0.0 else 0.0
    return g, (float(lc.mean() + lam_lr), float(lc.mean()), float(lr.mean()))


def sample_gradient(params, sample, lambda_recon=1.0, inputs=None):
    """Gradient of the per-sample loss; ``inputs`` override the encoder input."""
    x = sample.values[None] if inputs is None else np.asarray(inputs)[None]
    trace = forward_batch(params, x)
    grads, _ = backward(trace, params, sample.values[None], sample.mask[None],
                        [sample.label], lambda_recon)
    return grads


# ---------------------------------------------------------------------------
# clipping and optimisers
# ---------------------------------------------------------------------------

def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in grads.values())))


def clip_gradients(grads, threshold, mode="rescale_to_threshold"):
    """Rescale ``grads`` when their global norm exceeds ``threshold``.

    Returns ``(clipped_grads, pre_clip_norm, activated)``.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if mode not in CLIP_MODES:
        raise ValueError(f"mode must be one of {CLIP_MODES}")
    n = global_norm(grads)
    if n <= threshold:
        return dict(grads), n, False
    scale = threshold / n if mode == "rescale_to_threshold" else 1.0 / n
    return {k: v * scale for k, v in grads.items()}, n, True


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, mats, grads):
        for k in mats:
            mats[k] = mats[k] - self.lr * grads[k]


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, mats, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in mats:
            g = grads[k]
            m = self.m.get(k, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(k, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            mats[k] = mats[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name, lr):
    return Adam(lr) if name == "adam" else SGD(lr)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def fit(train, cfg, init=None, log=None):
    """Minibatch training. Returns ``(params, TrainReport)``.

    Each epoch reshuffles with a seed derived from ``cfg.seed`` and, when
    corruption is configured, draws a fresh corruption keyed by the epoch.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    labels = train.labels
    if np.any(labels < 0):
        raise ValueError("training requires every sample to carry a label")
    params = init.copy() if init is not None else init_params(
        train.D, cfg.latent_dim, train.num_classes, cfg.cell_kind, cfg.seed, cfg.activations)
    if (params.D, params.Q) != (train.D, train.num_classes):
        raise ValueError(
            f"initial parameters have D={params.D}, Q={params.Q}; data has "
            f"D={train.D}, Q={train.num_classes}"
        )
    values, mask = train.values_array(), train.mask_array()
    mats = params.matrices
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    report = TrainReport()
    N = len(train)
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, "shuffle", epoch).permutation(N)
        sums = np.zeros(3)
        norms, clipped = [], 0
        for b, start in enumerate(range(0, N, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            tv, tm = values[idx], mask[idx]
            if cfg.corruption is not None:
                xin, _ = corrupt_batch(tv, tm, idx, cfg.corruption, epoch)
            else:
                xin = tv
            trace = forward_batch(params, xin)
            grads, losses = backward(trace, params, tv, tm, labels[idx], cfg.lambda_recon)
            if not np.all(np.isfinite(losses)):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            sums += np.array(losses) * len(idx)
            grads, n, active = clip_gradients(grads, cfg.clip_threshold, cfg.clip_mode)
            norms.append(n)
            clipped += int(active)
            opt.step(mats, grads)
        report.loss.append(float(sums[0] / N))
        report.loss_c.append(float(sums[1] / N))
        report.loss_r.append(float(sums[2] / N))
        report.grad_norm.append(float(np.mean(norms)))
        report.clipped.append(clipped)
        if log is not None:
            log(epoch + 1, report)
    report.wall_time = time.perf_counter() - t0
    return params.with_matrices(mats), report


# ---------------------------------------------------------------------------
# vanishing / exploding diagnostics
# ---------------------------------------------------------------------------

def step_jacobians(params, trace, b=0):
    """Per-step state Jacobians for batch row ``b``.

    Simple RNN: dh_k/dh_{k-1} = diag(g_h'(a_k)) U for k = 1..J.
    LSTM: dm_k/dm_{k-1}, i.e. the direct forget path diag(f_k) plus the
    gate/candidate dependence routed through h_{k-1} = o_{k-1} tanh(m_{k-1}).
    """
    J = trace.J
    if params.cell_kind == SIMPLE_RNN:
        g_h = params.act("hidden")
        U = params["U"]
        return [g_h.derivative_from_output(trace.enc_h[k, b])[:, None] * U
                for k in range(1, J + 1)]
    L = params.L
    jacs = []
    for k in range(1, J + 1):
        gt = trace.gates[k - 1, b]
        i, f, mt = gt[:L], gt[2 * L:3 * L], gt[3 * L:]
        m_prev = trace.enc_m[k - 1, b]
        # dh_{k-1}/dm_{k-1}; zero at k=1 because h_0 is a constant
        if k >= 2:
            o_prev = trace.gates[k - 2, b][L:2 * L]
            dh_dm = o_prev * (1.0 - np.tanh(m_prev) ** 2)
        else:
            dh_dm = np.zeros(L)
        via_h = ((m_prev * f * (1 - f))[:, None] * params["U_f"]
                 + (mt * i * (1 - i))[:, None] * params["U_i"]
                 + (i * (1 - mt * mt))[:, None] * params["U_m"])
        jacs.append(np.diag(f) + via_h * dh_dm[None, :])
    return jacs


def gradient_pathology_probe(params, sample, j, s):
    """Spectral norm of the accumulated state Jacobian between steps s < j.

    Steps are 1-based with 0 the initial state. For a simple RNN this is
    ||dh_j/dh_s||; for an LSTM the memory analogue ||dm_j/dm_s||.
    """
    if not 0 <= s < j:
        raise ValueError("need 0 <= s < j")
    x = sample.values if hasattr(sample, "values") else np.asarray(sample, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if j > x.shape[0]:
        raise ValueError(f"j={j} exceeds curve length {x.shape[0]}")
    trace = forward_batch(params, x[None])
    jacs = step_jacobians(params, trace)
    acc = np.eye(params.L)
    for k in range(s + 1, j + 1):
        acc = jacs[k - 1] @ acc
    return spectral(acc)


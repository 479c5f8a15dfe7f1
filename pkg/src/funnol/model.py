"""Recurrent encoder, recurrent decoder and classifier head.

Shapes follow the row-vector-batch convention: a batch of curves is a
(B, J, D) array and every matrix multiplies from the left on column
vectors, e.g. ``h_j = g_h(W x_j + U h_{j-1})`` is computed as
``x_j @ W.T + h_prev @ U.T`` on (B, .) rows.

    encoder   h_j = g_h(W x_j + U h_{j-1}),     z = g_z(V h_J)
    decoder   h~_j = g_h~(W~ z + U~ h~_{j-1}),  x~_j = g_x(G h~_j)
    classify  y = g_y(M z)

The LSTM encoder replaces the first line by the usual input/output/forget
gated memory cell; the decoder is always a simple recurrent net.
"""

from dataclasses import dataclass, field

import numpy as np

from funnol.linalg import get_activation, sigmoid
from funnol.seeding import derive_rng

SIMPLE_RNN = "rnn"
LSTM = "lstm"
CELL_KINDS = (SIMPLE_RNN, LSTM)

GATES = ("i", "o", "f", "m")

DEFAULT_ACTIVATIONS = {
    "hidden": "tanh",          # g_h, simple-RNN encoder state
    "feature": "identity",     # g_z
    "decoder_hidden": "tanh",  # g_h~
    "output": "identity",      # g_x
    "class": "softmax",        # g_y
}


def encoder_names(cell_kind):
    if cell_kind == SIMPLE_RNN:
        return ["W", "U"]
    if cell_kind == LSTM:
        return [f"W_{g}" for g in GATES] + [f"U_{g}" for g in GATES]
    raise ValueError(f"unknown cell kind {cell_kind!r}; expected one of {CELL_KINDS}")


def param_shapes(cell_kind, D, L, Q):
    shapes = {}
    for name in encoder_names(cell_kind):
        shapes[name] = (L, D) if name.startswith("W") else (L, L)
    shapes.update({"V": (L, L), "Wd": (L, L), "Ud": (L, L), "G": (D, L), "M": (Q, L)})
    return shapes


@dataclass
class FunnolParams:
    """All weight matrices plus the activation choices.

    ``Wd``/``Ud`` are the decoder's input and recurrent matrices (W~, U~).
    """

    cell_kind: str
    matrices: dict
    activations: dict = field(default_factory=lambda: dict(DEFAULT_ACTIVATIONS))

    def __post_init__(self):
        acts = dict(DEFAULT_ACTIVATIONS)
        acts.update(self.activations)
        unknown = set(acts) - set(DEFAULT_ACTIVATIONS)
        if unknown:
            raise ValueError(f"unknown activation slots {sorted(unknown)}")
        for name in acts.values():
            get_activation(name)
        self.activations = acts
        self.matrices = {k: np.asarray(v, dtype=np.float64) for k, v in self.matrices.items()}
        expected = param_shapes(self.cell_kind, self.D, self.L, self.Q)
        if set(expected) != set(self.matrices):
            raise ValueError(
                f"parameter blocks {sorted(self.matrices)} do not match {sorted(expected)}"
            )
        for name, shape in expected.items():
            if self.matrices[name].shape != shape:
                raise ValueError(f"{name} has shape {self.matrices[name].shape}, expected {shape}")
        for name, a in self.matrices.items():
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite entries")
        self.matrices = {k: self.matrices[k] for k in expected}

    @property
    def D(self):
        return self.matrices["G"].shape[0]

    @property
    def L(self):
        return self.matrices["V"].shape[0]

    @property
    def Q(self):
        return self.matrices["M"].shape[0]

    def __getitem__(self, name):
        return self.matrices[name]

    def names(self):
        return list(self.matrices)

    def act(self, slot):
        return get_activation(self.activations[slot])

    def copy(self):
        return FunnolParams(self.cell_kind, {k: v.copy() for k, v in self.matrices.items()},
                            dict(self.activations))

    def with_matrices(self, matrices):
        return FunnolParams(self.cell_kind, matrices, dict(self.activations))

    def zeros_like(self):
        return {k: np.zeros_like(v) for k, v in self.matrices.items()}


def init_params(D, L, Q, cell_kind=LSTM, seed=0, activations=None):
    """Glorot-uniform initialisation, one derived stream per matrix."""
    mats = {}
    for name, (rows, cols) in param_shapes(cell_kind, D, L, Q).items():
        bound = np.sqrt(6.0 / (rows + cols))
        mats[name] = derive_rng(seed, "init", name).uniform(-bound, bound, (rows, cols))
    return FunnolParams(cell_kind, mats, activations or {})


def zero_params(D, L, Q, cell_kind=LSTM, activations=None):
    shapes = param_shapes(cell_kind, D, L, Q)
    return FunnolParams(cell_kind, {k: np.zeros(s) for k, s in shapes.items()},
                        activations or {})


# ---------------------------------------------------------------------------
# single-step cells
# ---------------------------------------------------------------------------

def rnn_cell(params, x, h_prev):
    """One simple-RNN step; returns (h, pre-activation)."""
    a = np.asarray(x) @ params["W"].T + np.asarray(h_prev) @ params["U"].T
    return params.act("hidden")(a), a


def lstm_cell(params, x, h_prev, m_prev):
    """One LSTM step. Returns (h, m, gates) where gates holds i, o, f, m~."""
    x, h_prev, m_prev = (np.asarray(v, dtype=np.float64) for v in (x, h_prev, m_prev))
    pre = {g: x @ params[f"W_{g}"].T + h_prev @ params[f"U_{g}"].T for g in GATES}
    i, o, f = sigmoid(pre["i"]), sigmoid(pre["o"]), sigmoid(pre["f"])
    mt = np.tanh(pre["m"])
    m = f * m_prev + i * mt
    h = o * np.tanh(m)
    return h, m, {"i": i, "o": o, "f": f, "mt": mt, "pre": pre}


# ---------------------------------------------------------------------------
# batched passes
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Every intermediate quantity of one forward pass over a batch.

    Time-indexed arrays are (J, B, .) with hidden/memory states carrying an
    extra leading slot for the zero initial state (index 0 is h_0).
    """

    x: np.ndarray                 # (B, J, D) encoder input
    enc_pre: np.ndarray           # (J, B, L) simple-RNN, (J, B, 4L) LSTM
    enc_h: np.ndarray             # (J+1, B, L)
    z_pre: np.ndarray             # (B, L)
    z: np.ndarray                 # (B, L)
    dec_pre: np.ndarray           # (J, B, L)
    dec_h: np.ndarray             # (J+1, B, L)
    out_pre: np.ndarray           # (J, B, D)
    x_hat: np.ndarray             # (B, J, D)
    y_pre: np.ndarray             # (B, Q)
    y: np.ndarray                 # (B, Q)
    gates: np.ndarray | None = None   # (J, B, 4L) activated i, o, f, m~
    enc_m: np.ndarray | None = None   # (J+1, B, L)

    @property
    def J(self):
        return self.x.shape[1]

    def gate(self, name):
        """Activated gate values (J, B, L) for name in i, o, f, mt."""
        L = self.z.shape[1]
        k = {"i": 0, "o": 1, "f": 2, "mt": 3}[name]
        return self.gates[:, :, k * L:(k + 1) * L]


def _stacked(params, prefix):
    return np.concatenate([params[f"{prefix}_{g}"] for g in GATES], axis=0)


def encode_batch(params, x):
    """Run the encoder over (B, J, D) inputs. Returns a partial trace dict."""
    x = np.asarray(x, dtype=np.float64)
    B, J, _ = x.shape
    L = params.L
    h = np.zeros((J + 1, B, L))
    if params.cell_kind == SIMPLE_RNN:
        g_h = params.act("hidden")
        W, U = params["W"], params["U"]
        xw = np.einsum("bjd,ld->jbl", x, W)
        pre = np.empty((J, B, L))
        for j in range(J):
            pre[j] = xw[j] + h[j] @ U.T
            h[j + 1] = g_h(pre[j])
        out = {"enc_pre": pre, "enc_h": h}
    else:
        Wc, Uc = _stacked(params, "W"), _stacked(params, "U")
        xw = np.einsum("bjd,kd->jbk", x, Wc)
        pre = np.empty((J, B, 4 * L))
        gates = np.empty((J, B, 4 * L))
        m = np.zeros((J + 1, B, L))
        for j in range(J):
            pre[j] = xw[j] + h[j] @ Uc.T
            gates[j, :, :3 * L] = sigmoid(pre[j, :, :3 * L])
            gates[j, :, 3 * L:] = np.tanh(pre[j, :, 3 * L:])
            i, o, f, mt = (gates[j, :, k * L:(k + 1) * L] for k in range(4))
            m[j + 1] = f * m[j] + i * mt
            h[j + 1] = o * np.tanh(m[j + 1])
        out = {"enc_pre": pre, "enc_h": h, "gates": gates, "enc_m": m}
    z_pre = h[J] @ params["V"].T
    out["z_pre"] = z_pre
    out["z"] = params.act("feature")(z_pre)
    return out


def decode_batch(params, z, J):
    """Unroll the decoder for J steps from features z (B, L)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    B, L = z.shape
    g_d, g_x = params.act("decoder_hidden"), params.act("output")
    zw = z @ params["Wd"].T
    Ud, G = params["Ud"], params["G"]
    h = np.zeros((J + 1, B, L))
    pre = np.empty((J, B, L))
    for j in range(J):
        pre[j] = zw + h[j] @ Ud.T
        h[j + 1] = g_d(pre[j])
    out_pre = np.einsum("jbl,dl->jbd", h[1:], G)
    x_hat = g_x(out_pre).transpose(1, 0, 2)
    return {"dec_pre": pre, "dec_h": h, "out_pre": out_pre, "x_hat": x_hat}


def classify_batch(params, z):
    z = np.asarray(z, dtype=np.float64)
    y_pre = z @ params["M"].T
    return y_pre, params.act("class")(y_pre)


def forward_batch(params, x):
    """Encoder, decoder (at the input's own J) and classifier on (B, J, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[2] != params.D:
        raise ValueError(f"input has {x.shape[2]} channels, model expects {params.D}")
    enc = encode_batch(params, x)
    dec = decode_batch(params, enc["z"], x.shape[1])
    y_pre, y = classify_batch(params, enc["z"])
    return ForwardTrace(x=x, y_pre=y_pre, y=y, **enc, **dec)


# ---------------------------------------------------------------------------
# per-sample conveniences
# ---------------------------------------------------------------------------

def _sample_values(sample):
    # masked cells are the sentinel 0 by construction of FunctionalSample
    return sample.values if hasattr(sample, "values") else np.asarray(sample, dtype=np.float64)


def encode(params, sample):
    """Feature vector z for one curve, plus the encoder trace."""
    x = np.asarray(_sample_values(sample), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    enc = encode_batch(params, x[None])
    return enc["z"][0], enc


def decode(params, z, J):
    """Reconstruct J points from one feature vector; returns ((J, D), trace)."""
    dec = decode_batch(params, np.asarray(z)[None, :], J)
    return dec["x_hat"][0], dec


def classify(params, z):
    return classify_batch(params, np.asarray(z)[None, :])[1][0]


def forward(params, sample):
    x = np.asarray(_sample_values(sample), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return forward_batch(params, x[None])


def encode_dataset(params, ds, batch_size=256):
    """(N, L) features for every curve of a dataset."""
    v = ds.values_array()
    out = [encode_batch(params, v[s:s + batch_size])["z"] for s in range(0, len(v), batch_size)]
    return np.vstack(out) if out else np.zeros((0, params.L))

"""JSON checkpoints for FunNoL parameters and FPCA models.

Floats are written with Python's shortest round-trip repr and keys are
sorted, so saving the same model twice gives byte-identical files and
loading restores every float bit for bit.
"""

import json

import numpy as np

from funnol.dataset import Standardizer
from funnol.fpca import FpcaModel
from funnol.model import FunnolParams

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _matrix(a):
    a = np.asarray(a, dtype=np.float64)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "data": [float(v) for v in a.reshape(-1)]}


def _unmatrix(d):
    data = np.array(d["data"], dtype=np.float64)
    if data.size != d["rows"] * d["cols"]:
        raise CheckpointError("matrix data length does not match rows x cols")
    return data.reshape(d["rows"], d["cols"])


def _floats(v):
    return [float(x) for x in np.asarray(v, dtype=np.float64).reshape(-1)]


def params_to_dict(params, standardizer=None, J=None, label_names=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "funnol",
        "cell_kind": params.cell_kind,
        "dims": {"D": params.D, "L": params.L, "Q": params.Q, "J": J},
        "activations": dict(params.activations),
        "matrices": {k: _matrix(v) for k, v in params.matrices.items()},
    }
    if standardizer is not None:
        doc["standardization"] = {"mean": _floats(standardizer.mean),
                                  "sd": _floats(standardizer.sd)}
    if label_names is not None:
        doc["label_names"] = list(label_names)
    return doc


def fpca_to_dict(model, label_names=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "fpca",
        "dims": {"D": model.num_channels, "J": model.J, "K": model.K},
        "grid": _floats(model.grid),
        "quad_weights": _floats(model.quad_weights),
        "mean": _floats(model.mean),
        "eigenvalues": _floats(model.eigenvalues),
        "eigenfunctions": _matrix(model.eigenfunctions),
    }
    if label_names is not None:
        doc["label_names"] = list(label_names)
    return doc


def dumps(doc):
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save(path, doc):
    with open(path, "w") as fh:
        fh.write(dumps(doc))


def load(path):
    """Read a checkpoint; returns (kind, object, extras dict)."""
    with open(path) as fh:
        doc = json.load(fh)
    return from_dict(doc)


def from_dict(doc):
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    extras = {"dims": doc.get("dims", {}), "label_names": doc.get("label_names")}
    if kind == "funnol":
        params = FunnolParams(doc["cell_kind"],
                              {k: _unmatrix(v) for k, v in doc["matrices"].items()},
                              doc["activations"])
        st = doc.get("standardization")
        extras["standardizer"] = (Standardizer(np.array(st["mean"]), np.array(st["sd"]))
                                  if st else None)
        return kind, params, extras
    if kind == "fpca":
        model = FpcaModel(np.array(doc["grid"]), np.array(doc["quad_weights"]),
                          np.array(doc["mean"]), np.array(doc["eigenvalues"]),
                          _unmatrix(doc["eigenfunctions"]), int(doc["dims"]["D"]))
        return kind, model, extras
    raise CheckpointError(f"unknown checkpoint kind {kind!r}")

"""Command line interface.

    funnol train       --data FILE [FILE ...] --out DIR
    funnol encode      --checkpoint CKPT --data FILE ... --out FILE.csv
    funnol reconstruct --checkpoint CKPT --data FILE ... --out FILE.csv
    funnol classify    --checkpoint CKPT --data FILE ... --out FILE.csv
    funnol fpca        --data FILE ... --k K --out DIR
    funnol protocol    --data FILE ... --method funnol_c --splits 50 --out DIR
    funnol sparsity    --data FILE ... --keep 0.9 0.5 0.1 --out DIR
    funnol report      --summaries A.json B.json ... --out table.md

Each ``--data`` entry is one channel; a comma-separated entry stacks the rows
of several files (e.g. ``Earthquakes_TRAIN.tsv,Earthquakes_TEST.tsv``).
Options may also come from a flat JSON ``--config`` file; flags given on the
command line win. Exit status: 0 success, 1 domain error, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from funnol import checkpoint, plotting
from funnol.corruption import CorruptionConfig
from funnol.dataset import DataFormatError, fit_standardizer, load_ucr, write_rows
from funnol.eval import METHODS, ProtocolConfig, run_split_protocol, run_sparsity_experiment
from funnol.fpca import fpc_scores_dataset, fpca_fit, impute_dataset
from funnol.model import CELL_KINDS, LSTM, encode_dataset, forward_batch
from funnol.train import CLIP_MODES, OPTIMIZERS, TrainConfig, TrainingError, TrainReport, fit

log = logging.getLogger("funnol")

DEFAULTS = {
    "data": None,
    "grid": None,
    "out": None,
    "checkpoint": None,
    "figures": True,
    # training
    "epochs": 300,
    "lr": 1e-3,
    "batch_size": 32,
    "clip": 5.0,
    "clip_mode": "rescale_to_threshold",
    "lambda_recon": 1.0,
    "optimizer": "adam",
    "seed": 0,
    "cell": LSTM,
    "latent_dim": 8,
    "corruption": "on",
    "miss_prob": 0.1,
    "noise_sd": 0.1,
    # fpca / protocols
    "k": None,
    "method": "funnol_c",
    "methods": None,
    "splits": 50,
    "train_fraction": 0.7,
    "keep": [0.9, 0.7, 0.5, 0.3, 0.1],
    "l2": 1e-4,
    "threads": 1,
    "name": None,
    "summaries": None,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _data_args(p, required=True):
    p.add_argument("--data", nargs="+", metavar="FILE",
                   help="one UCR-format file per channel (comma joins row blocks)")
    p.add_argument("--grid", metavar="FILE", help="optional file of grid time points")
    p.set_defaults(_needs_data=required)


def _train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float, help="learning rate")
    g.add_argument("--batch-size", type=int)
    g.add_argument("--clip", type=float, help="gradient-norm threshold")
    g.add_argument("--clip-mode", choices=CLIP_MODES)
    g.add_argument("--lambda", dest="lambda_recon", type=float,
                   help="weight on the reconstruction loss")
    g.add_argument("--optimizer", choices=OPTIMIZERS)
    g.add_argument("--seed", type=int)
    g.add_argument("--cell", choices=CELL_KINDS)
    g.add_argument("--latent-dim", type=int, help="feature dimension L")
    g.add_argument("--corruption", choices=("on", "off"))
    g.add_argument("--miss-prob", type=float)
    g.add_argument("--noise-sd", type=float)


def _protocol_args(p):
    g = p.add_argument_group("protocol")
    g.add_argument("--splits", type=int)
    g.add_argument("--train-fraction", type=float)
    g.add_argument("--k", type=int, help="number of FPCs (defaults to --latent-dim)")
    g.add_argument("--l2", type=float, help="ridge weight of the logistic regression")
    g.add_argument("--threads", type=int)
    g.add_argument("--name", help="dataset name recorded in summaries")


def build_parser():
    parser = argparse.ArgumentParser(prog="funnol", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="flat JSON file of option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a FunNoL model")
    _data_args(p)
    _train_args(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-figures", dest="figures", action="store_const", const=False)

    for name, helptext in (("encode", "write representations"),
                           ("reconstruct", "write reconstructed curves"),
                           ("classify", "write predicted labels and probabilities")):
        p = sub.add_parser(name, help=helptext)
        _data_args(p)
        p.add_argument("--checkpoint")
        p.add_argument("--out", help="output CSV file")
        p.add_argument("--no-figures", dest="figures", action="store_const", const=False)

    p = sub.add_parser("fpca", help="fit the FPCA baseline")
    _data_args(p)
    p.add_argument("--k", type=int)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("protocol", help="repeated random-split evaluation")
    _data_args(p)
    _train_args(p)
    _protocol_args(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("sparsity", help="split protocol over thinned copies of the data")
    _data_args(p)
    _train_args(p)
    _protocol_args(p)
    p.add_argument("--keep", type=float, nargs="+", help="keep fractions in (0, 1]")
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-figures", dest="figures", action="store_const", const=False)

    p = sub.add_parser("report", help="merge protocol summaries into a table")
    p.add_argument("--summaries", nargs="+", metavar="JSON")
    p.add_argument("--out", help="Markdown file (stdout if omitted)")
    p.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    return parser


def resolve(args):
    """Merge defaults, config file and explicit flags into one dict."""
    opts = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(cfg) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        opts.update(cfg)
    for k, v in vars(args).items():
        if v is not None and not k.startswith("_") and k not in ("config", "verbose"):
            opts[k] = v
    opts["command"] = args.command
    if getattr(args, "_needs_data", False) and not opts["data"]:
        raise UsageError("--data is required")
    if isinstance(opts["data"], str):
        opts["data"] = [opts["data"]]
    return opts


def _require(opts, *keys):
    missing = [k for k in keys if not opts.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k for k in missing))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def load_data(opts):
    entries = [e.split(",") if "," in e else e for e in opts["data"]]
    return load_ucr(entries, grid=opts.get("grid"))


def train_config(opts):
    corr = None
    if opts["corruption"] == "on":
        corr = CorruptionConfig(opts["miss_prob"], opts["noise_sd"], opts["seed"])
    return TrainConfig(
        latent_dim=opts["latent_dim"], learning_rate=opts["lr"], epochs=opts["epochs"],
        batch_size=opts["batch_size"], clip_threshold=opts["clip"],
        clip_mode=opts["clip_mode"], lambda_recon=opts["lambda_recon"], corruption=corr,
        optimizer=opts["optimizer"], cell_kind=opts["cell"], seed=opts["seed"],
    )


def protocol_config(opts):
    tcfg = replace(train_config(opts), corruption=None)
    return ProtocolConfig(
        train=tcfg,
        corruption=CorruptionConfig(opts["miss_prob"], opts["noise_sd"], opts["seed"]),
        fpca_k=opts["k"], train_fraction=opts["train_fraction"], l2=opts["l2"],
        seed=opts["seed"], threads=opts["threads"],
    )


def _dataset_name(opts):
    if opts.get("name"):
        return opts["name"]
    first = opts["data"][0].split(",")[0]
    stem = os.path.splitext(os.path.basename(first))[0]
    for suffix in ("_TRAIN", "_TEST"):
        stem = stem.removesuffix(suffix)
    return stem


def _outdir(opts):
    _require(opts, "out")
    os.makedirs(opts["out"], exist_ok=True)
    return opts["out"]


def _figure_path(csv_path, suffix=""):
    return os.path.splitext(csv_path)[0] + suffix + ".png"


def _load_funnol(opts, ds):
    _require(opts, "checkpoint")
    kind, params, extra = checkpoint.load(opts["checkpoint"])
    if kind != "funnol":
        raise checkpoint.CheckpointError(f"expected a funnol checkpoint, got {kind!r}")
    dims = extra["dims"]
    if params.D != ds.D:
        raise DataFormatError(f"checkpoint expects D={params.D} channels, data has {ds.D}")
    if dims.get("J") is not None and dims["J"] != ds.J:
        raise DataFormatError(f"checkpoint was trained on J={dims['J']} points, data has {ds.J}")
    st = extra["standardizer"]
    scaled = st.apply(ds) if st is not None else ds
    return params, st, scaled


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(opts):
    ds = load_data(opts)
    out = _outdir(opts)
    st = fit_standardizer(ds)
    scaled = st.apply(ds)
    cfg = train_config(opts)
    params, report = fit(scaled, cfg, log=lambda e, r: log.debug(
        "epoch %d loss %.6g", e, r.loss[-1]))
    ckpt = os.path.join(out, "checkpoint.json")
    checkpoint.save(ckpt, checkpoint.params_to_dict(params, st, ds.J, ds.label_names))
    write_rows(os.path.join(out, "report.csv"), TrainReport.header, report.rows())
    if opts["figures"] and report.loss:
        plotting.training_curves(report, os.path.join(out, "training.png"))
    log.info("wrote %s (final loss %s)", ckpt, report.loss[-1] if report.loss else "n/a")
    return 0


def cmd_encode(opts):
    ds = load_data(opts)
    params, _, scaled = _load_funnol(opts, ds)
    _require(opts, "out")
    Z = encode_dataset(params, scaled)
    rows = [[i] + list(z) for i, z in enumerate(Z)]
    write_rows(opts["out"], ["sample"] + [f"z{k + 1}" for k in range(params.L)], rows)
    if opts["figures"] and len(Z):
        plotting.latent_scatter(Z, ds.labels, _figure_path(opts["out"]))
    return 0


def cmd_reconstruct(opts):
    ds = load_data(opts)
    params, st, scaled = _load_funnol(opts, ds)
    _require(opts, "out")
    x_hat = forward_batch(params, scaled.values_array()).x_hat
    if st is not None:
        x_hat = st.invert(x_hat)
    values, mask = ds.values_array(), ds.mask_array()
    resid = np.where(mask, values - x_hat, 0.0)
    mse = float(np.sum(resid ** 2) / max(mask.sum(), 1))
    header = ["sample"] + [f"x_d{d}_t{j}" for d in range(ds.D) for j in range(ds.J)]
    rows = [[i] + list(x_hat[i].T.reshape(-1)) for i in range(len(ds))]
    write_rows(opts["out"], header, rows)
    if opts["figures"] and len(ds):
        plotting.reconstructions(ds.grid, values, mask, x_hat, _figure_path(opts["out"]))
    print(f"masked MSE {mse!r}")
    return 0


def cmd_classify(opts):
    ds = load_data(opts)
    params, _, scaled = _load_funnol(opts, ds)
    _require(opts, "out")
    y = forward_batch(params, scaled.values_array()).y
    pred = np.argmax(y, axis=1)
    rows = [[i, int(pred[i])] + list(y[i]) for i in range(len(ds))]
    write_rows(opts["out"], ["sample", "label"] + [f"prob_{q}" for q in range(params.Q)], rows)
    labels = ds.labels
    if len(ds) and np.all(labels >= 0):
        print(f"accuracy {float(np.mean(pred == labels))!r}")
    return 0


def cmd_fpca(opts):
    ds = impute_dataset(load_data(opts))
    out = _outdir(opts)
    k = opts["k"] or opts["latent_dim"]
    model = fpca_fit(ds, k)
    checkpoint.save(os.path.join(out, "fpca.json"), checkpoint.fpca_to_dict(model, ds.label_names))
    scores = fpc_scores_dataset(model, ds)
    write_rows(os.path.join(out, "scores.csv"), ["sample"] + [f"score{j + 1}" for j in range(k)],
               [[i] + list(s) for i, s in enumerate(scores)])
    write_rows(os.path.join(out, "eigenvalues.csv"), ["component", "eigenvalue"],
               [[j + 1, float(v)] for j, v in enumerate(model.all_eigenvalues)])
    return 0


def _summary_doc(result, name):
    doc = result.summary()
    doc["dataset"] = name
    return doc


def _dump_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_protocol(opts):
    ds = load_data(opts)
    out = _outdir(opts)
    name = _dataset_name(opts)
    result = run_split_protocol(ds, opts["method"], opts["splits"], protocol_config(opts))
    stem = os.path.join(out, f"{name}_{opts['method']}")
    write_rows(stem + "_splits.csv", ["split", "accuracy"],
               [[i, a] for i, a in enumerate(result.accuracies)])
    _dump_json(stem + "_summary.json", _summary_doc(result, name))
    print(f"{name} {opts['method']}: {result.mean:.3f} ({result.se:.3f}) over {result.splits} splits")
    return 0


def cmd_sparsity(opts):
    ds = load_data(opts)
    out = _outdir(opts)
    name = _dataset_name(opts)
    cfg = protocol_config(opts)
    methods = opts["methods"] or [opts["method"]]
    results = {}
    for method in methods:
        res = run_sparsity_experiment(ds, method, opts["keep"], opts["splits"], cfg)
        results[method] = res
        stem = os.path.join(out, f"{name}_{method}")
        write_rows(stem + "_sparsity.csv", ["keep_fraction", "split", "accuracy"],
                   [[r.keep_fraction, i, a] for r in res for i, a in enumerate(r.accuracies)])
        _dump_json(stem + "_sparsity_summary.json", [_summary_doc(r, name) for r in res])
        for r in res:
            print(f"{name} {method} keep={r.keep_fraction:g}: {r.mean:.3f} ({r.se:.3f})")
    if opts["figures"]:
        plotting.accuracy_boxplots(results, os.path.join(out, f"{name}_sparsity.png"), name)
    return 0


def _fmt(mean, se):
    def short(v):
        s = f"{v:.3f}"
        return s[1:] if s.startswith("0.") else s
    return f"{short(mean)}({short(se)})"


def render_table(summaries):
    """Markdown table: one row per method, one column per dataset (and keep fraction)."""
    cols, rows, cells = [], [], {}
    for s in summaries:
        col = s.get("dataset") or "data"
        if s.get("keep_fraction", 1.0) != 1.0:
            col = f"{col} @{s['keep_fraction']:.0%}"
        method = plotting.METHOD_LABELS.get(s["method"], s["method"])
        if col not in cols:
            cols.append(col)
        if method not in rows:
            rows.append(method)
        cells[(method, col)] = _fmt(s["mean"], s["se"])
    lines = ["| | " + " | ".join(cols) + " |", "|---" * (len(cols) + 1) + "|"]
    for m in rows:
        lines.append(f"| {m} | " + " | ".join(cells.get((m, c), "") for c in cols) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(opts):
    _require(opts, "summaries")
    summaries = []
    for path in opts["summaries"]:
        with open(path) as fh:
            doc = json.load(fh)
        summaries.extend(doc if isinstance(doc, list) else [doc])
    table = render_table(summaries)
    if opts["out"]:
        with open(opts["out"], "w") as fh:
            fh.write(table)
        if opts["figures"]:
            plotting.summary_bars(summaries, _figure_path(opts["out"]))
    else:
        sys.stdout.write(table)
    return 0


COMMANDS = {
    "train": cmd_train, "encode": cmd_encode, "reconstruct": cmd_reconstruct,
    "classify": cmd_classify, "fpca": cmd_fpca, "protocol": cmd_protocol,
    "sparsity": cmd_sparsity, "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"funnol: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, TrainingError, DataFormatError,
            checkpoint.CheckpointError, KeyError) as exc:
        print(f"funnol: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

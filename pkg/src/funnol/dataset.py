"""Functional datasets: UCR-style ingestion, splits, sparsification, scaling.

A curve is stored as a J x D value grid with a boolean mask of the same
shape. Unobserved cells always hold the sentinel 0.0 so that code reading
``values`` directly (the encoders) never sees stale data.
"""

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from funnol.seeding import derive_rng


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FunctionalSample:
    values: np.ndarray
    mask: np.ndarray
    label: int | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim == 1:
            values = values[:, None]
        if mask.ndim == 1:
            mask = mask[:, None]
        if values.shape != mask.shape:
            raise ValueError(f"values {values.shape} and mask {mask.shape} differ")
        values = np.where(mask, values, 0.0)
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, values, label=None):
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool), label)

    @property
    def J(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class Dataset:
    grid: np.ndarray
    samples: tuple
    num_classes: int
    num_channels: int
    # raw labels as they appeared in the source file, indexed by class id
    label_names: tuple = field(default=())

    def __post_init__(self):
        grid = np.array(self.grid, dtype=np.float64)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", tuple(self.samples))
        if grid.ndim != 1 or (grid.size > 1 and np.any(np.diff(grid) <= 0)):
            raise ValueError("grid must be a strictly increasing 1-d array")
        for i, s in enumerate(self.samples):
            if s.values.shape != (grid.size, self.num_channels):
                raise ValueError(
                    f"sample {i} has shape {s.values.shape}, expected "
                    f"{(grid.size, self.num_channels)}"
                )
            if s.label is not None and not 0 <= s.label < self.num_classes:
                raise ValueError(f"sample {i} label {s.label} outside 0..{self.num_classes - 1}")
        if not self.label_names:
            object.__setattr__(self, "label_names", tuple(range(self.num_classes)))

    def __len__(self):
        return len(self.samples)

    @property
    def J(self):
        return self.grid.size

    @property
    def D(self):
        return self.num_channels

    @property
    def labels(self):
        return np.array([-1 if s.label is None else s.label for s in self.samples])

    def values_array(self):
        """(N, J, D) values with sentinel zeros."""
        if not self.samples:
            return np.zeros((0, self.J, self.D))
        return np.stack([s.values for s in self.samples])

    def mask_array(self):
        if not self.samples:
            return np.zeros((0, self.J, self.D), dtype=bool)
        return np.stack([s.mask for s in self.samples])

    def subset(self, indices):
        return self.replace_samples([self.samples[i] for i in indices])

    def replace_samples(self, samples):
        return Dataset(self.grid, samples, self.num_classes, self.num_channels,
                       self.label_names)

    @classmethod
    def from_arrays(cls, values, labels=None, mask=None, grid=None, num_classes=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        n, j, d = values.shape
        if mask is None:
            mask = ~np.isnan(values)
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 2:
            mask = mask[:, :, None]
        values = np.where(mask, np.nan_to_num(values), 0.0)
        if labels is None:
            labs = [None] * n
            q = num_classes or 0
        else:
            labs = [int(v) for v in labels]
            q = num_classes if num_classes is not None else (max(labs) + 1 if labs else 0)
        if grid is None:
            grid = np.arange(j, dtype=np.float64)
        samples = [FunctionalSample(values[i], mask[i], labs[i]) for i in range(n)]
        return cls(grid, samples, q, d)


def concat(datasets):
    """Row-concatenate datasets that share grid, channels and label coding."""
    first = datasets[0]
    samples = []
    for ds in datasets:
        if ds.J != first.J or ds.D != first.D or ds.label_names != first.label_names:
            raise DataFormatError("datasets to concatenate differ in shape or labels")
        samples.extend(ds.samples)
    return first.replace_samples(samples)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _parse_label(text, path, lineno):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: label {text!r} is not a number") from None
    if not v.is_integer():
        raise DataFormatError(f"{path}:{lineno}: label {text!r} is not an integer")
    return int(v)


def _read_table(path):
    """Return (raw labels, value rows) from one delimited file."""
    with open(path, newline="") as fh:
        text = fh.read()
    first = text.split("\n", 1)[0]
    delim = "\t" if "\t" in first else ","
    labels, rows = [], []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\r").split(delim)
        labels.append(_parse_label(fields[0].strip(), path, lineno))
        row = []
        for f in fields[1:]:
            f = f.strip()
            try:
                row.append(math.nan if f == "" else float(f))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad value {f!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(
                f"{path}:{lineno}: ragged row with {len(row)} values, expected {width}"
            )
        rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return labels, np.array(rows, dtype=np.float64)


def load_ucr(path, channels=None, grid=None):
    """Load a UCR-format file (label first, then the curve values).

    ``path`` may be a single file or a list of per-channel files; ``channels``
    is accepted as an alternative spelling for the list. Each entry may
    itself be a list of files whose rows are stacked (e.g. a TRAIN and a
    TEST file). NaN or empty fields are treated as missing.
    """
    if channels:
        paths = list(channels)
    elif isinstance(path, (list, tuple)):
        paths = list(path)
    else:
        paths = [path]

    label_ref = None
    blocks = []
    for ch, entry in enumerate(paths):
        files = [entry] if isinstance(entry, (str, os.PathLike)) else list(entry)
        labels, rows = [], []
        for f in files:
            lab, val = _read_table(f)
            if rows and val.shape[1] != rows[0].shape[1]:
                raise DataFormatError(f"{f}: curve length differs from {files[0]}")
            labels.extend(lab)
            rows.append(val)
        rows = np.vstack(rows)
        if label_ref is None:
            label_ref = labels
        elif labels != label_ref:
            bad = next(i for i, (a, b) in enumerate(zip(labels, label_ref)) if a != b) \
                if len(labels) == len(label_ref) else min(len(labels), len(label_ref))
            raise DataFormatError(
                f"channel {ch} labels disagree with channel 0 at row {bad + 1}"
            )
        if blocks and rows.shape[1] != blocks[0].shape[1]:
            raise DataFormatError(f"channel {ch} curve length differs from channel 0")
        blocks.append(rows)

    values = np.stack(blocks, axis=-1)
    names = sorted(set(label_ref))
    code = {raw: k for k, raw in enumerate(names)}
    labels = [code[raw] for raw in label_ref]
    if grid is not None and not isinstance(grid, np.ndarray):
        grid = np.loadtxt(grid, dtype=np.float64, ndmin=1)
    ds = Dataset.from_arrays(values, labels, grid=grid, num_classes=len(names))
    return Dataset(ds.grid, ds.samples, ds.num_classes, ds.num_channels, tuple(names))


def write_ucr(ds, path_prefix, delimiter="\t"):
    """Write one file per channel plus a JSON sidecar; returns the file list.

    Missing cells are written as NaN, floats with shortest round-trip repr.
    """
    paths = []
    if ds.D == 1:
        names = [f"{path_prefix}.tsv" if delimiter == "\t" else f"{path_prefix}.csv"]
    else:
        ext = "tsv" if delimiter == "\t" else "csv"
        names = [f"{path_prefix}_dim{d}.{ext}" for d in range(ds.D)]
    for d, name in enumerate(names):
        with open(name, "w", newline="") as fh:
            for s in ds.samples:
                raw = "" if s.label is None else str(ds.label_names[s.label])
                cells = [repr(float(v)) if m else "NaN"
                         for v, m in zip(s.values[:, d], s.mask[:, d])]
                fh.write(delimiter.join([raw] + cells) + "\n")
        paths.append(name)
    sidecar = {
        "J": ds.J, "D": ds.D, "Q": ds.num_classes, "N": len(ds),
        "grid": [float(t) for t in ds.grid],
        "label_names": list(ds.label_names),
        "files": [os.path.basename(p) for p in paths],
    }
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def write_rows(path, header, rows):
    """Delimited numeric output with round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


# ---------------------------------------------------------------------------
# splitting / sparsification / scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def _train_counts(sizes, fraction):
    """Per-class training counts.

    Each class gets floor(fraction * n_q) (at least 1 when n_q >= 2); if the
    total falls short of floor(fraction * N), the shortfall goes to the
    classes with the largest fractional remainders (lower class first on
    ties), never taking a class's last sample.
    """
    exact = [fraction * n for n in sizes]
    counts = [n if n == 1 else max(1, math.floor(e)) for n, e in zip(sizes, exact)]
    target = math.floor(fraction * sum(sizes))
    order = sorted(range(len(sizes)), key=lambda q: (-(exact[q] - math.floor(exact[q])), q))
    for q in order:
        if sum(counts) >= target:
            break
        if counts[q] < sizes[q] - 1 and exact[q] > counts[q]:
            counts[q] += 1
    return counts


def split_indices(ds, spec):
    """Stratified train/test indices; classes are shuffled independently."""
    if len(ds) < 2:
        raise ValueError("need at least two samples to split")
    rng = derive_rng(spec.seed, "split")
    labels = ds.labels
    classes = np.unique(labels)
    members = [np.flatnonzero(labels == q) for q in classes]
    counts = _train_counts([m.size for m in members], spec.train_fraction)
    train, test = [], []
    for q, idx, k in zip(classes, members, counts):
        if idx.size == 1:
            warnings.warn(f"class {q} has a single sample; assigned to training set",
                          stacklevel=3)
        idx = idx[rng.permutation(idx.size)]
        train.extend(idx[:k].tolist())
        test.extend(idx[k:].tolist())
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


def split(ds, spec):
    tr, te = split_indices(ds, spec)
    return ds.subset(tr), ds.subset(te)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def downsample(ds, keep_fraction, seed):
    """Keep a random subset of round(keep_fraction * J) points per curve/channel."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    keep = _round_half_up(keep_fraction * ds.J)
    if keep < 2:
        raise ValueError(f"keep_fraction {keep_fraction} leaves {keep} points per curve")
    if keep >= ds.J:
        return ds
    out = []
    for i, s in enumerate(ds.samples):
        rng = derive_rng(seed, "downsample", i)
        mask = np.zeros_like(s.mask)
        for d in range(ds.D):
            obs = np.flatnonzero(s.mask[:, d])
            chosen = rng.choice(obs, size=min(keep, obs.size), replace=False)
            mask[chosen, d] = True
        out.append(FunctionalSample(s.values, mask, s.label))
    return ds.replace_samples(out)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, ds):
        out = [FunctionalSample((s.values - self.mean) / self.sd, s.mask, s.label)
               for s in ds.samples]
        return ds.replace_samples(out)

    def invert(self, values):
        return np.asarray(values) * self.sd + self.mean


def fit_standardizer(train):
    if len(train) == 0:
        raise ValueError("cannot standardize with an empty training set")
    v, m = train.values_array(), train.mask_array()
    mean = np.zeros(train.D)
    sd = np.ones(train.D)
    for d in range(train.D):
        obs = v[:, :, d][m[:, :, d]]
        if obs.size:
            mean[d] = obs.mean()
        if obs.size > 1:
            s = obs.std(ddof=1)
            sd[d] = s if s >= 1e-12 else 1.0
    return Standardizer(mean, sd)


def standardize(train, test):
    """Scale channels by observed training-entry mean and sd (ddof=1)."""
    st = fit_standardizer(train)
    return st.apply(train), st.apply(test), st

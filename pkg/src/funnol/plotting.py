"""Figures written next to the CSV/JSON outputs of the CLI."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

METHOD_COLORS = {"funnol_c": "tab:red", "funnol_nc": "tab:blue", "fpca": "tab:green"}
METHOD_LABELS = {"funnol_c": "FunNoL_c", "funnol_nc": "FunNoL_nc", "fpca": "FPCA"}


def _size(scale=1.0, ratio=None):
    width = 6.0 * scale
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def _save(fig, path):
    # no timestamps in the metadata so reruns are byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curves(report, path):
    """Total, classification and reconstruction loss per epoch."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(0.9))
        epochs = np.arange(1, len(report.loss) + 1)
        ax.plot(epochs, report.loss, label="total", color="k")
        ax.plot(epochs, report.loss_c, label="classification", color="tab:orange")
        ax.plot(epochs, report.loss_r, label="reconstruction", color="tab:purple")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        if len(epochs) > 1 and min(report.loss) > 0:
            ax.set_yscale("log")
        ax.legend(frameon=False)
        return _save(fig, path)


def accuracy_boxplots(results, path, title=None):
    """Boxplots of split accuracies against keep fraction, one colour per method.

    ``results`` maps method name to a list of ProtocolResult (one per keep
    fraction).
    """
    methods = list(results)
    fractions = sorted({r.keep_fraction for rs in results.values() for r in rs}, reverse=True)
    width = 0.8 / max(len(methods), 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(1.2, 0.45))
        for m_i, method in enumerate(methods):
            by_frac = {r.keep_fraction: r.accuracies for r in results[method]}
            pos, data = [], []
            for f_i, kf in enumerate(fractions):
                if kf in by_frac:
                    pos.append(f_i + (m_i - (len(methods) - 1) / 2) * width)
                    data.append(by_frac[kf])
            bp = ax.boxplot(data, positions=pos, widths=width * 0.9, patch_artist=True,
                            manage_ticks=False, medianprops={"color": "k"})
            color = METHOD_COLORS.get(method, "tab:gray")
            for box in bp["boxes"]:
                box.set_facecolor(color)
                box.set_alpha(0.6)
            ax.plot([], [], color=color, lw=6, alpha=0.6, label=METHOD_LABELS.get(method, method))
        ax.set_xticks(range(len(fractions)))
        ax.set_xticklabels([f"{kf:.0%}" for kf in fractions])
        ax.set_xlabel("observed portion of each curve")
        ax.set_ylabel("test accuracy")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, ncol=len(methods))
        return _save(fig, path)


def latent_scatter(Z, labels, path, title=None):
    """First two representation coordinates coloured by class."""
    Z = np.asarray(Z)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(0.7, 0.9))
        second = Z[:, 1] if Z.shape[1] > 1 else np.zeros(len(Z))
        for q in np.unique(labels):
            sel = np.asarray(labels) == q
            ax.scatter(Z[sel, 0], second[sel], s=8, label=f"class {q}")
        ax.set_xlabel("feature 1")
        ax.set_ylabel("feature 2")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, markerscale=2)
        return _save(fig, path)


def reconstructions(grid, values, mask, x_hat, path, n=4):
    """Observed points against reconstructed curves for the first ``n`` samples."""
    values, mask, x_hat = np.asarray(values), np.asarray(mask), np.asarray(x_hat)
    n = min(n, len(values))
    D = values.shape[2]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, D, figsize=(3.0 * D, 1.8 * n), squeeze=False,
                                 sharex=True)
        for i in range(n):
            for d in range(D):
                ax = axes[i, d]
                obs = mask[i, :, d]
                ax.plot(grid[obs], values[i, obs, d], ".", ms=3, color="0.4")
                ax.plot(grid, x_hat[i, :, d], color="tab:red", lw=1)
                if i == 0:
                    ax.set_title(f"channel {d}")
        return _save(fig, path)


def summary_bars(summaries, path):
    """Mean accuracy with standard-error whiskers for a set of protocol summaries."""
    labels = [f"{s.get('dataset', '')} {METHOD_LABELS.get(s['method'], s['method'])}".strip()
              for s in summaries]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(1.0, 0.5))
        x = np.arange(len(summaries))
        colors = [METHOD_COLORS.get(s["method"], "tab:gray") for s in summaries]
        ax.bar(x, [s["mean"] for s in summaries], yerr=[s["se"] for s in summaries],
               color=colors, alpha=0.7, capsize=3)
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("test accuracy")
        ax.set_ylim(0, 1)
        return _save(fig, path)

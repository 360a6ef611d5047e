"""Report, CSV and figure writers.

Everything written here is byte-deterministic for a fixed config and
seed: floats print with 17 significant digits, keys keep insertion
order, and figures carry fixed metadata.
"""

from __future__ import annotations

import numpy as np

FLOAT_FMT = "%.17g"


def fmt_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt_value(v) for v in np.asarray(value).ravel())
    return str(value)


class Report:
    """Ordered key = value report with section banners."""

    def __init__(self):
        self.lines = []

    def section(self, title):
        self.lines.append(f"[{title}]")

    def add(self, key, value):
        self.lines.append(f"{key} = {fmt_value(value)}")

    def add_dict(self, payload, prefix=""):
        for key, value in payload.items():
            if isinstance(value, dict):
                self.add_dict(value, prefix + key + ".")
            elif isinstance(value, (list, tuple)) and value \
                    and not np.isscalar(value[0]) \
                    and not isinstance(value[0], (int, float, np.floating)):
                self.add(prefix + key, repr(value))
            else:
                self.add(prefix + key, value)

    def text(self):
        return "\n".join(self.lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.text())


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_value(v) for v in row) + "\n")


def write_grid_csv(path, gridfn):
    table = gridfn.to_table()
    dim = gridfn.box.dim
    header = [f"x{i+1}" for i in range(dim)] + \
        [f"v{i+1}" for i in range(table.shape[1] - dim)]
    write_csv(path, header, table)


def _figure_backend():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


_PNG_META = {"Software": "smoothlin"}


def plot_convergence(rows, path, title="fixed-point convergence"):
    """Semilog plot of per-iteration deltas (iteration, dv, dw, ratio)."""
    plt = _figure_backend()
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    its = [r[0] for r in rows]
    ax.semilogy(its, [max(r[1], 1e-300) for r in rows], "o-", ms=3,
                label="base delta")
    ax.semilogy(its, [max(r[2], 1e-300) for r in rows], "s-", ms=3,
                label="fiber delta")
    ax.set_xlabel("iteration")
    ax.set_ylabel("weighted delta")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def plot_decay(decay, eta, path, title="band limit decay"):
    plt = _figure_backend()
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ks = [k for k, _ in decay]
    ds = [max(d, 1e-300) for _, d in decay]
    ax.semilogy(ks, ds, "o-", ms=3, label="successive differences")
    if ks:
        ref = [ds[0] * eta ** (k - ks[0]) for k in ks]
        ax.semilogy(ks, ref, "--", label=f"eta^k (eta={eta:.3g})")
    ax.set_xlabel("k")
    ax.set_ylabel("sup difference")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def plot_sweep(rows, path, title="sharpness sweep"):
    plt = _figure_backend()
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ps = [r.parameter for r in rows if r.error is None]
    pred = [r.predicted_beta for r in rows if r.error is None]
    meas = [r.measured_exponent for r in rows if r.error is None]
    ax.plot(ps, pred, "s--", label="guaranteed exponent")
    ax.plot(ps, meas, "o-", label="measured exponent")
    ax.set_xlabel("family parameter")
    ax.set_ylabel("Holder exponent")
    ax.set_ylim(0, 1.1)
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def plot_band_structure(dec, path, title="spectral bands"):
    plt = _figure_backend()
    fig, ax = plt.subplots(figsize=(5.0, 2.4))
    for i, band in enumerate(dec.bands):
        ax.plot([band.lambda_minus, band.lambda_plus], [0, 0], lw=6,
                solid_capstyle="butt",
                color="tab:blue" if band.contractive else "tab:red")
        ax.annotate(str(i + 1),
                    (0.5 * (band.lambda_minus + band.lambda_plus), 0.02),
                    ha="center", fontsize=8)
    ax.axvline(1.0, color="k", lw=0.8, ls=":")
    ax.set_xscale("log")
    ax.set_yticks([])
    ax.set_xlabel("modulus")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)

"""Figures written alongside the JSON/JSONL reports."""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .congestion import Bands  # noqa: E402

PLOT_PARAMS = {
    "figure.figsize": (8, 4.5),
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.titlesize": 12,
    "axes.labelsize": 11,
    "legend.fontsize": 9,
}


def save_fig(fig, name, out_dir, formats=("png",)):
    """Save ``fig`` as ``out_dir/name.<fmt>`` for each format and close it.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for fmt in formats:
        path = os.path.join(out_dir, f"{name}.{fmt}")
        fig.savefig(path, dpi=120, metadata={"Software": None} if fmt == "png" else None)
        paths.append(path)
    plt.close(fig)
    return paths


def plot_pr_curves(curves_by_model, out_dir):
    """One PR figure per model; ``curves_by_model`` maps model -> {class: [(recall, precision)]}."""
    written = []
    with plt.rc_context(PLOT_PARAMS):
        for model, curves in curves_by_model.items():
            fig, ax = plt.subplots()
            for cls, pts in sorted(curves.items()):
                if not pts:
                    continue
                r, p = zip(*pts)
                ax.step(r, p, where="post", label=cls)
            ax.set_xlim(0, 1.02)
            ax.set_ylim(0, 1.02)
            ax.set_xlabel("Recall")
            ax.set_ylabel("Precision")
            ax.set_title(f"{model}: precision-recall at IoU 0.50")
            ax.legend(loc="lower left")
            written += save_fig(fig, f"pr_{model}", out_dir)
    return written


def plot_occupancy(series, transitions, out_dir, bands=Bands(), name="occupancy"):
    """Occupancy ratio per segment over time with band edges and level changes.

    ``series`` maps segment_id -> [(ts_ms, ratio)]; ``transitions`` is a list
    of transition dicts as written to the transition log.
    """
    with plt.rc_context(PLOT_PARAMS):
        fig, ax = plt.subplots()
        for sid, pts in sorted(series.items()):
            if not pts:
                continue
            t, r = zip(*pts)
            ax.plot([x / 1000 for x in t], r, lw=1, label=sid)
        for edge in bands.edges:
            ax.axhline(edge, color="grey", ls="--", lw=0.7)
        for tr in transitions:
            if tr["to"] == "OVERCROWDED":
                ax.axvline(tr["ts"] / 1000, color="red", lw=0.6, alpha=0.6)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("occupancy ratio")
        ax.set_title("Smoothed occupancy (red: entered OVERCROWDED)")
        if series:
            ax.legend(loc="upper right")
        return save_fig(fig, name, out_dir)


def plot_truth_counts(counts, out_dir, name="truth_counts"):
    """Ground-truth vehicle counts per segment from a simulator run."""
    with plt.rc_context(PLOT_PARAMS):
        fig, ax = plt.subplots()
        for sid, pts in sorted(counts.items()):
            t, c = zip(*pts)
            ax.step([x / 1000 for x in t], c, where="post", lw=1, label=sid)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("vehicles on segment")
        ax.legend(loc="upper right")
        return save_fig(fig, name, out_dir)

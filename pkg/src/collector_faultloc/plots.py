"""Figure rendering for reports and convergence traces.

Figures are drawn from the already-aggregated statistics (no raw samples
are re-binned here) and written straight to files; the Agg backend keeps
this headless-safe.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import ErrorTable
from .montecarlo import ConvergenceTrace


def _bxp_stat(table: ErrorTable, label: str) -> dict:
    return {
        "label": label,
        "mean": table.mean,
        "med": table.median,
        "q1": table.q1,
        "q3": table.q3,
        "whislo": table.whisker_low,
        "whishi": table.whisker_high,
        "fliers": [],
    }


def render_error_boxplot(tables, x_key: str, path, title: str | None = None) -> None:
    """Grouped boxplots of error statistics, one color per method.

    ``x_key`` picks the category axis (fault_type, penetration_bin or
    segment_class); every method present in the tables gets one box per
    category, drawn from the precomputed quartiles and whiskers.
    """
    methods = sorted({t.method for t in tables if t.method is not None})
    categories = sorted({getattr(t, x_key) for t in tables}, key=str)
    if not methods or not categories:
        raise ValueError("tables carry no method/category structure to plot")

    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(categories)), 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    width = 0.8 / len(methods)
    for m_index, method in enumerate(methods):
        stats, positions = [], []
        for c_index, category in enumerate(categories):
            match = [t for t in tables
                     if t.method == method and getattr(t, x_key) == category]
            if not match:
                continue
            stats.append(_bxp_stat(match[0], str(category)))
            positions.append(c_index + (m_index - (len(methods) - 1) / 2.0) * width)
        if not stats:
            continue
        color = colors[m_index % len(colors)]
        artists = ax.bxp(stats, positions=positions, widths=width * 0.9,
                         showmeans=True, showfliers=False, patch_artist=True)
        for box in artists["boxes"]:
            box.set_facecolor(color)
            box.set_alpha(0.55)
        for element in ("medians", "whiskers", "caps"):
            for line in artists[element]:
                line.set_color(color)
        ax.plot([], [], color=color, label=method)

    ax.set_xticks(range(len(categories)))
    ax.set_xticklabels([str(c) for c in categories])
    ax.set_xlabel(x_key.replace("_", " "))
    ax.set_ylabel("location error [% of line]")
    ax.set_yscale("log")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_convergence_trace(trace: ConvergenceTrace, path, title: str | None = None) -> None:
    """Resolution metric versus scenario count, with the stopping threshold."""
    if not trace.entries:
        raise ValueError("empty convergence trace")
    counts = [n for n, _ in trace.entries]
    epsilons = [e for _, e in trace.entries]

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(counts, epsilons, marker="o", markersize=3, label=f"eps_{trace.percentile:g}(n)")
    if trace.tol_pu > 0.0:
        ax.axhline(trace.tol_pu, color="crimson", linestyle="--",
                   label=f"tolerance {trace.tol_pu:.3g} pu")
    if trace.converged_at is not None:
        ax.axvline(trace.converged_at, color="gray", linestyle=":", alpha=0.7)
    ax.set_xlabel("scenarios")
    ax.set_ylabel("nearest-neighbor resolution [pu]")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

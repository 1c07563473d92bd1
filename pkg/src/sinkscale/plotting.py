"""Figures for experiment tables (matplotlib, headless backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# x column, series column, whether x is log-scaled, title
LAYOUT = {
    "outlier_independence": ("outlier", "repeat", True, "Iterations vs outlier cost"),
    "prescale_acceleration": ("n", "prescale", True, "Iterations vs n (dense block family)"),
    "phase_transition": ("nu", "family", True, "Iterations vs nu"),
    "critical_boundary": ("eps", None, True, "Critical 2x2: iterations vs eps"),
    "nu_dependence": ("delta", "eps", True, "Tight 2x2: iterations vs delta"),
}

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "svg.hashsalt": "sinkscale",
}


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def plot_experiment(result, path):
    """Draw iterations against the swept variable, one line per series."""
    xcol, scol, logx, title = LAYOUT[result.experiment]
    series = {}
    for row in result.rows:
        x, y = _num(row.get(xcol)), _num(row.get("iterations"))
        if x is None or y is None:
            continue
        label = "measured" if scol is None else f"{scol}={row.get(scol)}"
        series.setdefault(label, []).append((x, y))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label in sorted(series):
            pts = sorted(series[label])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", lw=1.2, label=label)
        if result.experiment == "critical_boundary":
            pts = sorted((_num(r["eps"]), _num(r["bound"])) for r in result.rows if "bound" in r)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], ls="--", color="gray", label="2*ceil(1/(2 eps))")
            ax.set_yscale("log")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xcol)
        ax.set_ylabel("iterations (half-steps)")
        ax.set_title(title)
        if series:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else {"Date": None})
        plt.close(fig)
    return path

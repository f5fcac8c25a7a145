"""Figure rendering for experiment results.

One bar chart per metric: mean accuracy per setting with standard-deviation
error bars, written as PNG files alongside the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .core import MetricError  # noqa: E402

_METRIC_LABELS = {
    "name_accuracy": "Name accuracy",
    "position_accuracy": "Position accuracy",
}


def render_figures(result, out_dir, prefix: str = "results") -> list[str]:
    """Render one bar chart per metric from the 'all' rows; returns the paths."""
    cells = [c for c in result.summary() if c["place"] == "all"]
    if not cells:
        raise MetricError("result has no aggregate rows to plot")
    metrics = sorted({c["metric"] for c in cells})
    paths = []
    for metric in metrics:
        rows = [c for c in cells if c["metric"] == metric]
        settings = [c["setting"] for c in rows]
        means = [c["mean"] for c in rows]
        errs = [c["stddev"] for c in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(range(len(rows)), means, yerr=errs, capsize=4, color="#4878cf")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(settings, rotation=30, ha="right")
        ax.set_ylim(0.0, 1.0)
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        ax.set_xlabel("Setting")
        fig.tight_layout()
        path = f"{out_dir}/{prefix}_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths

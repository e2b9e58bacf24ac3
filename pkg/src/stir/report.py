"""Figure rendering for sweep reports.

Renders one figure per swept hyperparameter: average retrieved clips and
retrieval accuracy against the parameter value, written as PNG files
next to the delimited sweep output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SWEEPABLE = ("N", "L", "eta", "kappa_s")


def render_sweep_figures(rows, out_dir) -> dict[str, Path]:
    """One two-panel figure per parameter that takes more than one value."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures: dict[str, Path] = {}
    for param in SWEEPABLE:
        values = sorted({row.params[param] for row in rows})
        if len(values) < 2:
            continue
        # average over all rows sharing each value of the swept parameter
        clips = []
        accs = []
        for v in values:
            matching = [r for r in rows if r.params[param] == v]
            clips.append(sum(r.avg_clips for r in matching) / len(matching))
            accs.append(sum(r.retrieval_accuracy for r in matching) / len(matching))
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        ax1.plot(values, clips, marker="o")
        ax1.set_xlabel(param)
        ax1.set_ylabel("avg retrieved clips")
        ax1.grid(True, alpha=0.3)
        ax2.plot(values, accs, marker="o", color="tab:green")
        ax2.set_xlabel(param)
        ax2.set_ylabel("retrieval accuracy")
        ax2.set_ylim(-0.05, 1.05)
        ax2.grid(True, alpha=0.3)
        fig.suptitle(f"Sweep over {param}")
        fig.tight_layout()
        path = out_dir / f"sweep_{param}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        figures[f"figure_{param}"] = path
    return figures

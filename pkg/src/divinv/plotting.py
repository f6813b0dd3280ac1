"""Figures for sweep reports (headless Agg backend, PNG output)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (4.5, 3.2),
    "figure.dpi": 120,
}


def plot_sweep(records, fits, path) -> None:
    """Log-log ratio vs epsilon per (q, alpha), with the calibrated bound ``3 C (1 + eps^e)``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for fit in fits:
            sel = sorted((r for r in records if r.q == fit["q"] and r.alpha == fit["alpha"]),
                         key=lambda r: r.epsilon)
            if not sel:
                continue
            eps = np.array([r.epsilon for r in sel])
            ratio = np.array([r.ratio for r in sel])
            label = f"q={fit['q']:g}, alpha={fit['alpha']:g}"
            if fit.get("slope") is not None:
                label += f", slope {fit['slope']:.3f}"
            (line,) = ax.loglog(eps, ratio, "o-", label=label)
            if fit.get("bound_check"):
                bound = [row["bound"] for row in fit["bound_check"]]
                ax.loglog(eps, bound, "--", color=line.get_color(), lw=0.8,
                          label=f"3C(1+eps^{fit['predicted']:.2f})")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("||grad u||_q / ||f||_q")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)

"""Figures for the bench report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def bench_figures(rows, out_dir, stem="bench") -> list[Path]:
    """Value per client count, and state counts / runtime on log axes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = [r for r in rows if r.error is None and r.value is not None]
    ns = [r.clients for r in ok]
    paths = []
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 2.8))
        ax.plot(ns, [r.value for r in ok], "o-", color="k")
        for n, r in zip(ns, ok):
            ax.annotate(f"{r.value:.3f}", (n, r.value), textcoords="offset points",
                        xytext=(0, 6), ha="center", fontsize=7)
        ax.set_xlabel("clients")
        ax.set_ylabel("expected mean payoff")
        ax.set_xticks(ns)
        fig.tight_layout()
        p = out_dir / f"{stem}_value.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        paths.append(p)

        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        for attr, mark, lab in (("spec_states", "s", "spec"), ("mdp_states", "o", "MDP"),
                                ("machine_states", "^", "machine")):
            pts = [(r.clients, getattr(r, attr)) for r in ok if getattr(r, attr)]
            if pts:
                ax1.semilogy(*zip(*pts), mark + "-", label=lab)
        ax1.set_xlabel("clients")
        ax1.set_ylabel("states")
        ax1.set_xticks(ns)
        ax1.legend(frameon=False)
        ax2.semilogy(ns, [max(r.seconds, 1e-3) for r in ok], "o-", color="k")
        ax2.set_xlabel("clients")
        ax2.set_ylabel("seconds")
        ax2.set_xticks(ns)
        fig.tight_layout()
        p = out_dir / f"{stem}_size.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        paths.append(p)
    return paths

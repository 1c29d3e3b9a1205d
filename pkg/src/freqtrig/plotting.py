"""Figures rendered from the numeric tables. Tables stay the source of truth."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.2, 3.0),
    "savefig.bbox": "tight",
    "svg.hashsalt": "freqtrig",
}


def _save(fig, path):
    meta = {"Date": None} if str(path).endswith(".svg") else {"CreationDate": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def pareto_scatter(history, path, pref=None):
    """O1 against O2 for the first and last generation, coloured by O3."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        first, last = history[0], history[-1]
        for pop, marker, label in ((first, "x", f"gen {first.generation}"),
                                   (last, "o", f"gen {last.generation}")):
            o = np.array([m.objectives.values for m in pop.members])
            sc = ax.scatter(o[:, 1], o[:, 0], c=o[:, 2], marker=marker, cmap="viridis", label=label)
        if pref is not None:
            ax.axvspan(0, pref.o2_max, ymax=1, color="0.9", zorder=0)
            ax.axhline(pref.o1_max, color="0.5", lw=0.8, ls="--")
        fig.colorbar(sc, ax=ax, label="O3 (band distance)")
        ax.set_xlabel(r"O2 = $\|\delta\|_2$")
        ax.set_ylabel("O1 (surrogate loss)")
        ax.legend(frameon=False)
        _save(fig, path)


def sweep_plot(rows, path):
    """Mean AFR and trigger norm against the effectiveness weight alpha."""
    alphas = sorted({r["alpha"] for r in rows})
    afr = [np.mean([r["afr"] for r in rows if r["alpha"] == a]) for a in alphas]
    afr_sd = [np.std([r["afr"] for r in rows if r["alpha"] == a]) for a in alphas]
    norm = [np.mean([r["l2"] for r in rows if r["alpha"] == a]) for a in alphas]
    norm_sd = [np.std([r["l2"] for r in rows if r["alpha"] == a]) for a in alphas]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(alphas, norm, yerr=norm_sd, color="tab:blue", marker="o", ms=3, capsize=2)
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel(r"$\|\delta\|_2$", color="tab:blue")
        ax2 = ax.twinx()
        ax2.errorbar(alphas, afr, yerr=afr_sd, color="tab:red", marker="s", ms=3, capsize=2)
        ax2.set_ylabel("AFR", color="tab:red")
        ax2.spines["right"].set_visible(True)
        _save(fig, path)


def robustness_bars(rows, path):
    ops = [r["op"] for r in rows]
    x = np.arange(len(ops))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        ax.bar(x - 0.2, [r["acc"] for r in rows], 0.4, label="ACC")
        ax.bar(x + 0.2, [r["asr"] for r in rows], 0.4, label="ASR")
        ax.set_xticks(x, ops, rotation=30, ha="right")
        ax.set_ylabel("%")
        ax.set_ylim(0, 105)
        ax.legend(frameon=False, ncols=2)
        _save(fig, path)


def profile_plot(profiles: dict, path):
    """Radial power profiles on log-log axes, one line per labelled batch."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, prof in profiles.items():
            ok = prof.magnitudes > 0
            ax.loglog(prof.freqs[ok], prof.magnitudes[ok], marker=".", label=label)
        ax.set_xlabel("radial frequency bin")
        ax.set_ylabel("mean power")
        ax.legend(frameon=False)
        _save(fig, path)

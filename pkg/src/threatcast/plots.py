"""Report figures. Everything renders off-screen to files."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import PRCurve  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def _save(fig, path) -> None:
    # strip the version stamp so reruns produce identical files
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)


def pr_curves(curves: Mapping[str, PRCurve], path, title: str = "Precision / recall") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, curve in curves.items():
            ax.step(curve.recall, curve.precision, where="post", label=label)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_title(title)
        if curves:
            ax.legend(loc="lower left")
        _save(fig, path)


def precision_at_k(flags_by_scorer: Mapping[str, Sequence[bool]], path, max_k: int = 100,
                   title: str = "Precision@k") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, flags in flags_by_scorer.items():
            n = min(max_k, len(flags))
            hits, ys = 0, []
            for k in range(1, n + 1):
                hits += bool(flags[k - 1])
                ys.append(hits / k)
            ax.plot(range(1, n + 1), ys, label=label)
        ax.set_xlabel("k")
        ax.set_ylabel("Precision@k")
        ax.set_ylim(0, 1.02)
        ax.set_title(title)
        if flags_by_scorer:
            ax.legend(loc="lower right")
        _save(fig, path)


def lead_histogram(leads: Sequence[int], path, cutoff: int = 60) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(list(leads), bins=min(50, max(1, len(set(leads)))), color="0.35")
        ax.axvline(cutoff, color="C3", linestyle="--", linewidth=1)
        ax.set_xlabel("Days from first tweet to NVD publication")
        ax.set_ylabel("CVEs")
        _save(fig, path)


def training_curve(epochs: Sequence[int], losses: Sequence[float], path, label: str = "training loss") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(list(epochs), list(losses))
        ax.set_xlabel("Epoch")
        ax.set_ylabel(label)
        _save(fig, path)

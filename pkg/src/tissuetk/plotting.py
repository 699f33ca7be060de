"""Report figures: metric distributions, kappa comparison, mask outlines.

Figures are built on bare :class:`matplotlib.figure.Figure` objects with the
Agg canvas, so nothing here touches pyplot's global state.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

METHOD_COLORS = ("tab:red", "tab:blue")


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    # no Software/date metadata so reruns are byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_metric_distributions(metrics_by_method: dict, path, title: str = "") -> Path:
    """Violin plots of per-slide sensitivity (top) and precision (bottom) per cohort.

    ``metrics_by_method`` maps a method label to a list of ``MaskMetrics``.
    Undefined values are left out.
    """
    methods = list(metrics_by_method)
    cohorts = sorted({m.cohort for ms in metrics_by_method.values() for m in ms})
    fig = Figure(figsize=(max(4.0, 1.6 * len(cohorts) + 2), 6.0))
    axes = fig.subplots(2, 1, sharex=True)
    width = 0.8 / max(1, len(methods))
    for ax, metric in zip(axes, ("sensitivity", "precision")):
        for k, method in enumerate(methods):
            color = METHOD_COLORS[k % len(METHOD_COLORS)]
            for c, cohort in enumerate(cohorts):
                vals = [getattr(m, metric) for m in metrics_by_method[method] if m.cohort == cohort]
                vals = [v for v in vals if v is not None]
                if not vals:
                    continue
                pos = c + (k - (len(methods) - 1) / 2) * width
                if len(set(vals)) > 1:
                    parts = ax.violinplot([vals], positions=[pos], widths=width * 0.9,
                                          showmedians=True)
                    for body in parts["bodies"]:
                        body.set_facecolor(color)
                        body.set_alpha(0.5)
                    for key in ("cbars", "cmins", "cmaxes", "cmedians"):
                        parts[key].set_color(color)
                else:
                    ax.plot([pos], vals[:1], "o", color=color)
            ax.plot([], [], color=color, lw=6, alpha=0.5, label=method)
        ax.set_ylabel(metric)
        ax.set_ylim(-0.02, 1.02)
    axes[0].legend(loc="lower left", fontsize="small")
    axes[-1].set_xticks(range(len(cohorts)))
    axes[-1].set_xticklabels([c or "all slides" for c in cohorts], rotation=30, ha="right")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_kappa_comparison(results: dict, path, labels=("a", "b")) -> Path:
    """Point estimate and CI whisker of kappa per cohort for both routes.

    ``results`` maps cohort -> {"a": KappaResult, "b": KappaResult}.
    """
    cohorts = list(results)
    fig = Figure(figsize=(6.0, 0.5 * len(cohorts) + 1.5))
    ax = fig.subplots()
    for k, key in enumerate(("a", "b")):
        ys = np.arange(len(cohorts)) + (0.15 if k == 0 else -0.15)
        est = np.array([results[c][key].kappa for c in cohorts])
        lo = np.array([results[c][key].ci_low for c in cohorts])
        hi = np.array([results[c][key].ci_high for c in cohorts])
        ax.errorbar(est, ys, xerr=np.vstack([est - lo, hi - est]), fmt="o", capsize=3,
                    color=METHOD_COLORS[k], label=labels[k])
    ax.set_yticks(range(len(cohorts)))
    ax.set_yticklabels(cohorts)
    ax.invert_yaxis()
    ax.set_xlabel("quadratic weighted kappa")
    ax.legend(loc="lower left", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_mask_outlines(rgb: np.ndarray, masks: dict, path, title: str = "") -> Path:
    """Draw mask outlines over a slide thumbnail.

    ``masks`` maps a label to a 2-D bool array; each mask is stretched over
    the image extent, so masks at a coarser resolution line up.
    """
    h, w = rgb.shape[:2]
    fig = Figure(figsize=(5.0, 5.0 * h / w + 0.4))
    ax = fig.subplots()
    ax.imshow(rgb, extent=(0, w, h, 0))
    for k, (label, bits) in enumerate(masks.items()):
        bits = np.asarray(bits, dtype=float)
        color = METHOD_COLORS[k % len(METHOD_COLORS)]
        if bits.any() and not bits.all():
            mh, mw = bits.shape
            xs = (np.arange(mw) + 0.5) * w / mw
            ys = (np.arange(mh) + 0.5) * h / mh
            ax.contour(xs, ys, bits, levels=[0.5], colors=[color], linewidths=1.2)
        ax.plot([], [], color=color, label=label)
    ax.set_axis_off()
    ax.legend(loc="upper right", fontsize="small")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)

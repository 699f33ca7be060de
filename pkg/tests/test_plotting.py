import numpy as np

from tissuetk.concordance import KappaResult
from tissuetk.metrics import MaskMetrics
from tissuetk.plotting import plot_kappa_comparison, plot_mask_outlines, plot_metric_distributions


def test_metric_distributions_handles_undefined(tmp_path):
    ms = {"thr": [MaskMetrics("a", 5, 1, 1, 3, "c1"), MaskMetrics("b", 0, 0, 0, 9, "c1"),
                  MaskMetrics("c", 2, 2, 6, 0, "c2")],
          "ai": [MaskMetrics("a", 5, 0, 1, 4, "c1")]}
    path = plot_metric_distributions(ms, tmp_path / "f" / "m.png", title="t")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_kappa_plot_is_deterministic(tmp_path):
    r = {"c": {"a": KappaResult(0.8, 0.7, 0.9, 10, 100), "b": KappaResult(0.75, 0.6, 0.85, 10, 100)}}
    a = plot_kappa_comparison(r, tmp_path / "a.png", labels=("x", "y")).read_bytes()
    b = plot_kappa_comparison(r, tmp_path / "b.png", labels=("x", "y")).read_bytes()
    assert a == b


def test_outlines_with_empty_and_coarse_masks(tmp_path):
    rgb = np.full((40, 60, 3), 240, np.uint8)
    coarse = np.zeros((20, 30), bool)
    coarse[5:15, 5:20] = True
    path = plot_mask_outlines(rgb, {"a": coarse, "b": np.zeros((20, 30), bool)}, tmp_path / "o.png")
    assert path.stat().st_size > 0

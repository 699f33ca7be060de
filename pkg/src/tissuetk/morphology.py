"""Binary morphology and connected-component analysis on 2-D bool arrays.

Every operator treats the world outside the raster as background. Erosion,
dilation, opening and closing are evaluated on a canvas padded with
background by the element radius and cropped afterwards, which makes
closing extensive even for objects touching the edge.

Foreground components are 8-connected; holes are background components
that are not 4-connected to the raster edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "disk"
    radius: int = 2

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise ValueError(f"unknown structuring element shape {self.shape!r}")
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"radius must be an integer >= 1, got {self.radius}")

    def footprint(self) -> np.ndarray:
        r = int(self.radius)
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        return xx * xx + yy * yy <= r * r

    def __str__(self):
        return f"{self.shape} {self.radius}"

    @classmethod
    def parse(cls, text: str) -> "StructuringElement":
        """Parse ``"disk 2"`` / ``"square 3"``."""
        parts = text.split()
        if len(parts) != 2:
            raise ValueError(f"expected '<shape> <radius>', got {text!r}")
        return cls(parts[0], int(parts[1]))


@dataclass(frozen=True)
class RegionStats:
    label: int
    area: int
    centroid: tuple[float, float]  # (x, y)
    minor_axis_length: float
    touches_border: bool


def _as_bits(m) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    return m


def _padded(m: np.ndarray, r: int, op) -> np.ndarray:
    canvas = np.pad(m, r, mode="constant", constant_values=False)
    out = op(canvas)
    return out[r:r + m.shape[0], r:r + m.shape[1]]


def dilate(m, se: StructuringElement) -> np.ndarray:
    m = _as_bits(m)
    return ndimage.binary_dilation(m, structure=se.footprint(), border_value=0)


def erode(m, se: StructuringElement) -> np.ndarray:
    m = _as_bits(m)
    return ndimage.binary_erosion(m, structure=se.footprint(), border_value=0)


def close(m, se: StructuringElement) -> np.ndarray:
    """Dilation followed by erosion."""
    m = _as_bits(m)
    fp = se.footprint()
    return _padded(
        m, int(se.radius),
        lambda c: ndimage.binary_erosion(
            ndimage.binary_dilation(c, structure=fp, border_value=0),
            structure=fp, border_value=0),
    )


def open(m, se: StructuringElement) -> np.ndarray:  # noqa: A001 - morphological name
    """Erosion followed by dilation."""
    m = _as_bits(m)
    fp = se.footprint()
    return _padded(
        m, int(se.radius),
        lambda c: ndimage.binary_dilation(
            ndimage.binary_erosion(c, structure=fp, border_value=0),
            structure=fp, border_value=0),
    )


def fill_holes(m) -> np.ndarray:
    return ndimage.binary_fill_holes(_as_bits(m), structure=FOUR)


def label_components(m) -> tuple[np.ndarray, int]:
    """8-connected labeling, labels numbered in raster-scan discovery order.

    Returns ``(labels, count)`` where ``labels`` is an ``int32`` raster with
    0 for background.
    """
    labels, count = ndimage.label(_as_bits(m), structure=EIGHT)
    return labels.astype(np.int32, copy=False), int(count)


def region_stats(labels: np.ndarray, count: int | None = None) -> list[RegionStats]:
    """Area, centroid and minor axis length for every labeled component.

    The minor axis length is ``4 * sqrt(lambda_min)`` where ``lambda_min``
    is the smaller eigenvalue of the covariance of the component's pixel
    center coordinates (central second moments divided by the area).
    """
    labels = np.asarray(labels)
    if count is None:
        count = int(labels.max(initial=0))
    if count == 0:
        return []
    h, w = labels.shape
    yy, xx = np.nonzero(labels)
    lab = labels[yy, xx]
    n = count + 1
    area = np.bincount(lab, minlength=n).astype(np.float64)
    sx = np.bincount(lab, weights=xx, minlength=n)
    sy = np.bincount(lab, weights=yy, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        cx = sx / area
        cy = sy / area
    dx = xx - cx[lab]
    dy = yy - cy[lab]
    with np.errstate(invalid="ignore", divide="ignore"):
        cxx = np.bincount(lab, weights=dx * dx, minlength=n) / area
        cyy = np.bincount(lab, weights=dy * dy, minlength=n) / area
        cxy = np.bincount(lab, weights=dx * dy, minlength=n) / area
    # smaller eigenvalue of [[cxx, cxy], [cxy, cyy]]
    half_trace = (cxx + cyy) / 2.0
    disc = np.sqrt(((cxx - cyy) / 2.0) ** 2 + cxy ** 2)
    lam_min = np.maximum(half_trace - disc, 0.0)

    edge = np.zeros(n, dtype=bool)
    border = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    edge[np.unique(border)] = True

    out = []
    for k in range(1, count + 1):
        if area[k] == 0:
            continue
        out.append(RegionStats(
            label=k,
            area=int(area[k]),
            centroid=(float(cx[k]), float(cy[k])),
            minor_axis_length=float(4.0 * np.sqrt(lam_min[k])),
            touches_border=bool(edge[k]),
        ))
    return out


def remove_thin_objects(m, min_minor_axis: float) -> np.ndarray:
    """Drop components whose minor axis length is below ``min_minor_axis``."""
    if min_minor_axis < 0:
        raise ValueError("min_minor_axis must be >= 0")
    m = _as_bits(m)
    labels, count = label_components(m)
    keep = np.zeros(count + 1, dtype=bool)
    for rs in region_stats(labels, count):
        keep[rs.label] = rs.minor_axis_length >= min_minor_axis
    return keep[labels]


def clear_border(m, margin: int = 0) -> np.ndarray:
    """Remove every component with a pixel within ``margin`` of the edge.

    ``margin=0`` removes components touching the outermost row or column.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    m = _as_bits(m)
    labels, count = label_components(m)
    h, w = m.shape
    band = np.zeros_like(m)
    b = margin + 1
    band[:b, :] = True
    band[-b:, :] = True
    band[:, :b] = True
    band[:, -b:] = True
    doomed = np.zeros(count + 1, dtype=bool)
    doomed[np.unique(labels[band])] = True
    doomed[0] = True
    return ~doomed[labels]

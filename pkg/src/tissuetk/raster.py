"""Raster types and pixel-level numeric operations.

Grayscale fields are plain 2-D ``float64`` arrays; binary masks are carried
either as 2-D ``bool`` arrays (inside the algorithms) or as
:class:`BinaryMask` when the resolution has to travel with the bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse

from .errors import DimensionMismatch

LUMA_WEIGHTS = np.array([0.2125, 0.7154, 0.0721])
# the same weights in units of 1e-4, for exact integer accumulation
_LUMA_INT = np.array([2125, 7154, 721], dtype=np.int64)

# Isotropic nine-point ("Mehrstellen") Laplacian stencil.
MEHRSTELLEN = np.array(
    [[1.0, 4.0, 1.0],
     [4.0, -20.0, 4.0],
     [1.0, 4.0, 1.0]]
) / 6.0

LANCZOS_LOBES = 3


@dataclass
class RasterImage:
    """An 8-bit image at a known physical resolution.

    ``data`` has shape ``(height, width, channels)`` with ``channels`` 1 or 3.
    """

    data: np.ndarray
    mpp_x: float
    mpp_y: float

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) samples, got shape {data.shape}")
        if data.dtype != np.uint8:
            raise ValueError(f"expected uint8 samples, got {data.dtype}")
        if not (self.mpp_x > 0 and self.mpp_y > 0):
            raise ValueError("mpp must be positive")
        self.data = data
        self.mpp_x = float(self.mpp_x)
        self.mpp_y = float(self.mpp_y)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class BinaryMask:
    """Tissue (True) / background (False) raster with its resolution."""

    bits: np.ndarray
    mpp_x: float
    mpp_y: float
    slide_id: str = field(default="")

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        self.bits = bits.astype(bool, copy=False)
        if not (self.mpp_x > 0 and self.mpp_y > 0):
            raise ValueError("mpp must be positive")
        self.mpp_x = float(self.mpp_x)
        self.mpp_y = float(self.mpp_y)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


def _require_rgb(img: RasterImage) -> np.ndarray:
    if img.channels != 3:
        raise DimensionMismatch(f"expected 3 channels, got {img.channels}")
    return img.data


def to_grayscale(img: RasterImage) -> np.ndarray:
    """Luminance ``0.2125 R + 0.7154 G + 0.0721 B`` as a float field."""
    # integer sum first so a neutral pixel maps exactly onto its own value
    rgb = _require_rgb(img).astype(np.int64)
    return (rgb @ _LUMA_INT) / 10000.0


def convolve2d(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size 2-D convolution with mirror padding.

    The border is reflected about the edge pixel without repeating it
    (``[c, b, a, b, c]``), so a constant or affine field stays affine
    across the boundary of a symmetric stencil.
    """
    field = np.asarray(field, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if field.ndim != 2 or field.size == 0:
        raise ValueError("field must be a nonempty 2-D array")
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ValueError("kernel must be an odd k x k matrix")
    if not np.all(np.isfinite(kernel)):
        raise ValueError("kernel weights must be finite")
    return ndimage.convolve(field, kernel, mode="mirror")


def rgb_to_hsv(img: RasterImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hexcone HSV conversion; every channel is returned on ``[0, 1]``.

    Hue lies on ``[0, 1)`` and wraps, with red at 0. Achromatic pixels get
    hue 0 and saturation 0.
    """
    rgb = _require_rgb(img).astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)

    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        ((g - b) / safe_c) % 6.0,
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, h / 6.0, 0.0)
    h = np.where(h >= 1.0, h - 1.0, h)
    return h, s, v


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`, returning 8-bit RGB samples."""
    h = np.asarray(h, dtype=np.float64) * 6.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sector = np.floor(h).astype(int) % 6
    frac = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * frac)
    t = v * (1.0 - s * (1.0 - frac))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    rgb = np.stack(
        [np.choose(sector, choices_r), np.choose(sector, choices_g), np.choose(sector, choices_b)],
        axis=-1,
    )
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def lanczos_kernel(x: np.ndarray, lobes: int = LANCZOS_LOBES) -> np.ndarray:
    """``sinc(x) * sinc(x / lobes)`` on ``|x| < lobes``, zero outside."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < lobes, np.sinc(x) * np.sinc(x / lobes), 0.0)


def reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary integer positions into ``[0, n)`` by mirror reflection."""
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    m = np.mod(idx, period)
    return np.where(m >= n, period - m, m)


def lanczos_matrix(n_in: int, n_out: int, lobes: int = LANCZOS_LOBES) -> sparse.csr_matrix:
    """Sparse ``(n_out, n_in)`` resampling operator along one axis.

    When downsampling the kernel is stretched by the scale factor so it also
    acts as the anti-aliasing filter. Taps that fall outside the source are
    mirrored back in, then each row is normalized to sum to one.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("axis lengths must be >= 1")
    scale = n_in / n_out
    stretch = max(scale, 1.0)
    support = lobes * stretch
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    first = np.floor(centers - support).astype(int) + 1
    n_taps = int(np.ceil(2 * support)) + 1
    taps = first[:, None] + np.arange(n_taps)[None, :]
    weights = lanczos_kernel((taps - centers[:, None]) / stretch, lobes)
    rows = np.repeat(np.arange(n_out), n_taps)
    cols = reflect_index(taps, n_in).ravel()
    op = sparse.csr_matrix((weights.ravel(), (rows, cols)), shape=(n_out, n_in))
    op.sum_duplicates()
    norm = np.asarray(op.sum(axis=1)).ravel()
    return sparse.diags(1.0 / norm) @ op


def lanczos_resample(img: RasterImage, target_w: int, target_h: int) -> RasterImage:
    """Separable Lanczos-3 resample to ``target_w x target_h`` pixels.

    The output resolution is scaled so the physical extent is unchanged.
    """
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {target_w}x{target_h}")
    mpp_x = img.mpp_x * img.width / target_w
    mpp_y = img.mpp_y * img.height / target_h
    if (target_w, target_h) == (img.width, img.height):
        return RasterImage(img.data.copy(), mpp_x, mpp_y)

    wy = lanczos_matrix(img.height, target_h)
    wx = lanczos_matrix(img.width, target_w)
    out = np.empty((target_h, target_w, img.channels), dtype=np.uint8)
    for ch in range(img.channels):
        plane = img.data[:, :, ch].astype(np.float64)
        resampled = (wx @ (wy @ plane).T).T
        out[:, :, ch] = np.clip(np.rint(resampled), 0, 255).astype(np.uint8)
    return RasterImage(out, mpp_x, mpp_y)

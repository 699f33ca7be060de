"""Patch grids, mirror padding, tissue gating, record extraction and stitching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FootprintOutsideMask
from .pyramid import PyramidSlide, read_at_mpp
from .raster import BinaryMask, RasterImage, reflect_index
from .records import PatchRecord, write_records


@dataclass(frozen=True)
class TileSpec:
    patch_size: int = 512
    overlap: int = 0
    mpp: float = 8.0
    min_tissue_fraction: float = 0.10

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if not 0 <= 2 * self.overlap < self.patch_size:
            raise ValueError(
                f"overlap must satisfy 0 <= overlap < patch_size/2, got {self.overlap}")
        if not self.mpp > 0:
            raise ValueError("mpp must be positive")
        if not 0.0 <= self.min_tissue_fraction <= 1.0:
            raise ValueError("min_tissue_fraction must lie in [0, 1]")

    @property
    def stride(self) -> int:
        return self.patch_size - 2 * self.overlap


@dataclass
class PatchGrid:
    width: int
    height: int
    patch_size: int
    overlap: int
    stride: int
    nx: int
    ny: int
    pad_left: int
    pad_right: int
    pad_top: int
    pad_bottom: int
    mpp: float = 1.0
    origins: list[tuple[int, int]] = field(default_factory=list, repr=False)

    @property
    def padded_w(self) -> int:
        return self.width + self.pad_left + self.pad_right

    @property
    def padded_h(self) -> int:
        return self.height + self.pad_top + self.pad_bottom


def patches_along(dim: int, patch_size: int, overlap: int = 0) -> int:
    """Number of patches needed along one axis of length ``dim``."""
    stride = patch_size - 2 * overlap
    return max(1, math.ceil((dim - patch_size) / stride) + 1)


def plan_grid(w: int, h: int, spec: TileSpec) -> PatchGrid:
    """Lay out patches over a ``w x h`` raster.

    The padded extent along an axis is ``patch_size + (n - 1) * stride``
    for the smallest ``n`` that covers the axis; with no overlap this is
    the next multiple of ``patch_size``. Padding is split with the smaller
    half on the leading edge. Origins are listed row by row.
    """
    if w < 1 or h < 1:
        raise ValueError("raster dimensions must be >= 1")
    p, o, s = spec.patch_size, spec.overlap, spec.stride
    nx = patches_along(w, p, o)
    ny = patches_along(h, p, o)
    extra_x = p + (nx - 1) * s - w
    extra_y = p + (ny - 1) * s - h
    origins = [(i * s, j * s) for j in range(ny) for i in range(nx)]
    return PatchGrid(
        width=w, height=h, patch_size=p, overlap=o, stride=s, nx=nx, ny=ny,
        pad_left=extra_x // 2, pad_right=extra_x - extra_x // 2,
        pad_top=extra_y // 2, pad_bottom=extra_y - extra_y // 2,
        mpp=spec.mpp, origins=origins,
    )


def mirror_pad(img, grid: PatchGrid):
    """Reflect-pad an image (or a 2-D array) to the grid's padded extent.

    The edge pixel is not repeated: ``[a, b, c]`` padded by two on the left
    becomes ``[c, b, a, b, c]``.
    """
    data = img.data if isinstance(img, RasterImage) else np.asarray(img)
    if data.shape[:2] != (grid.height, grid.width):
        raise DimensionMismatch(f"image {data.shape[:2]} vs grid {(grid.height, grid.width)}")
    rows = reflect_index(np.arange(-grid.pad_top, grid.height + grid.pad_bottom), grid.height)
    cols = reflect_index(np.arange(-grid.pad_left, grid.width + grid.pad_right), grid.width)
    padded = data[rows][:, cols]
    if isinstance(img, RasterImage):
        return RasterImage(padded, img.mpp_x, img.mpp_y)
    return padded


def crop_padding(padded, grid: PatchGrid):
    data = padded.data if isinstance(padded, RasterImage) else np.asarray(padded)
    out = data[grid.pad_top:grid.pad_top + grid.height, grid.pad_left:grid.pad_left + grid.width]
    if isinstance(padded, RasterImage):
        return RasterImage(out.copy(), padded.mpp_x, padded.mpp_y)
    return out


def extract_patches(padded: np.ndarray, grid: PatchGrid) -> list[np.ndarray]:
    p = grid.patch_size
    return [padded[y:y + p, x:x + p] for x, y in grid.origins]


def _mask_indices(coords: np.ndarray, patch_mpp: float, mask_mpp: float, mask_dim: int) -> np.ndarray:
    # nearest neighbour: pixel centre in micrometres, floored onto the mask grid
    idx = np.floor((coords + 0.5) * patch_mpp / mask_mpp).astype(np.int64)
    return np.clip(idx, 0, mask_dim - 1)


def tissue_fraction(mask: BinaryMask, x: int, y: int, size: int, patch_mpp: float) -> float:
    """Fraction of a ``size x size`` patch at ``(x, y)`` that falls on tissue.

    ``x`` and ``y`` are in slide pixels at ``patch_mpp``; each patch pixel
    looks up the mask pixel under its centre.

    Raises
    ------
    FootprintOutsideMask
        If the patch extends past the mask by more than one mask pixel.
    """
    ext_x = mask.width * mask.mpp_x
    ext_y = mask.height * mask.mpp_y
    x0, y0 = x * patch_mpp, y * patch_mpp
    x1, y1 = (x + size) * patch_mpp, (y + size) * patch_mpp
    if (x0 < 0 or y0 < 0 or x1 > ext_x + mask.mpp_x or y1 > ext_y + mask.mpp_y):
        raise FootprintOutsideMask(
            f"patch [{x0}, {x1}] x [{y0}, {y1}] um outside mask extent {ext_x} x {ext_y} um")
    ix = _mask_indices(np.arange(x, x + size), patch_mpp, mask.mpp_x, mask.width)
    iy = _mask_indices(np.arange(y, y + size), patch_mpp, mask.mpp_y, mask.height)
    return float(mask.bits[np.ix_(iy, ix)].sum()) / (size * size)


def padded_tissue_lookup(mask: BinaryMask, grid: PatchGrid) -> np.ndarray:
    """Mask value under every pixel of the padded grid.

    Padded pixels take the value of the slide pixel they mirror.
    """
    cols = reflect_index(np.arange(-grid.pad_left, grid.width + grid.pad_right), grid.width)
    rows = reflect_index(np.arange(-grid.pad_top, grid.height + grid.pad_bottom), grid.height)
    ix = _mask_indices(cols, grid.mpp, mask.mpp_x, mask.width)
    iy = _mask_indices(rows, grid.mpp, mask.mpp_y, mask.height)
    return mask.bits[np.ix_(iy, ix)]


def patch_fractions(lookup: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Tissue fraction of every grid patch, in grid order."""
    integral = np.zeros((lookup.shape[0] + 1, lookup.shape[1] + 1), dtype=np.int64)
    integral[1:, 1:] = lookup.astype(np.int64).cumsum(0).cumsum(1)
    p = grid.patch_size
    out = np.empty(len(grid.origins))
    for k, (x, y) in enumerate(grid.origins):
        total = integral[y + p, x + p] - integral[y, x + p] - integral[y + p, x] + integral[y, x]
        out[k] = total / (p * p)
    return out


@dataclass
class ExtractionResult:
    slide_id: str
    path: Path
    n_patches: int
    n_kept: int

    @property
    def empty(self) -> bool:
        return self.n_kept == 0


def extract_records(slide: PyramidSlide | RasterImage, mask: BinaryMask, spec: TileSpec,
                    out_path, slide_id: str | None = None) -> ExtractionResult:
    """Write every patch passing the tissue gate to one record file.

    Patches are written in row-major grid order, so output bytes depend only
    on the inputs. A slide with no kept patches still gets an (empty) file.
    """
    if isinstance(slide, PyramidSlide):
        img = read_at_mpp(slide, spec.mpp)
        slide_id = slide.slide_id if slide_id is None else slide_id
    else:
        img = slide
        slide_id = slide_id or mask.slide_id
    grid = plan_grid(img.width, img.height, spec)
    padded = mirror_pad(img, grid).data
    fractions = patch_fractions(padded_tissue_lookup(mask, grid), grid)
    p = grid.patch_size

    def kept():
        for (x, y), frac in zip(grid.origins, fractions):
            if frac >= spec.min_tissue_fraction:
                yield PatchRecord(
                    slide_id=slide_id, x=x - grid.pad_left, y=y - grid.pad_top,
                    patch_size=p, mpp=spec.mpp, pixels=padded[y:y + p, x:x + p])

    n = write_records(out_path, kept())
    return ExtractionResult(slide_id, Path(out_path), len(grid.origins), n)


def _owner_spans(n: int, stride: int, overlap: int, padded: int) -> list[tuple[int, int]]:
    spans = []
    for i in range(n):
        lo = 0 if i == 0 else i * stride + overlap
        hi = padded if i == n - 1 else (i + 1) * stride + overlap
        spans.append((lo, hi))
    return spans


def assemble(grid: PatchGrid, patches) -> np.ndarray:
    """Rebuild the padded raster from per-patch arrays.

    Each patch supplies only the pixels it owns: its central
    ``stride x stride`` block, extended to the padded edge for the first and
    last patch along each axis.
    """
    patches = list(patches)
    if len(patches) != len(grid.origins):
        raise DimensionMismatch(f"expected {len(grid.origins)} patches, got {len(patches)}")
    first = np.asarray(patches[0])
    out = np.zeros((grid.padded_h, grid.padded_w) + first.shape[2:], dtype=first.dtype)
    xs = _owner_spans(grid.nx, grid.stride, grid.overlap, grid.padded_w)
    ys = _owner_spans(grid.ny, grid.stride, grid.overlap, grid.padded_h)
    p = grid.patch_size
    for k, patch in enumerate(patches):
        patch = np.asarray(patch)
        if patch.shape[:2] != (p, p):
            raise DimensionMismatch(f"patch {k} has shape {patch.shape[:2]}, expected {(p, p)}")
        j, i = divmod(k, grid.nx)
        ox, oy = grid.origins[k]
        (x0, x1), (y0, y1) = xs[i], ys[j]
        out[y0:y1, x0:x1] = patch[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
    return out


def stitch_predictions(grid: PatchGrid, patch_masks, slide_id: str = "") -> BinaryMask:
    """Combine per-patch binary predictions into a mask of the unpadded slide."""
    bits = [np.asarray(m.bits if isinstance(m, BinaryMask) else m, dtype=bool) for m in patch_masks]
    full = assemble(grid, bits)
    return BinaryMask(crop_padding(full, grid).copy(), grid.mpp, grid.mpp, slide_id)

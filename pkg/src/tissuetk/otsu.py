"""Otsu threshold selection and the classical tissue-detection pipeline."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import morphology as morph
from .errors import ConstantField, DimensionMismatch, ParseError
from .morphology import StructuringElement
from .raster import MEHRSTELLEN, BinaryMask, RasterImage, convolve2d, rgb_to_hsv, to_grayscale

STEP_NAMES = (
    "threshold",       # 2
    "close",           # 3
    "open",            # 4
    "fill_holes",      # 5
    "remove_thin",     # 6
    "hsv_filter",      # 7
    "clear_border",    # 8
)


def histogram_bins(values: np.ndarray, bins: int = 256) -> np.ndarray:
    """Bin index of every sample for ``bins`` uniform bins over ``[min, max]``.

    The last bin is closed on the right, as in :func:`numpy.histogram`.
    """
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.intp)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.intp)
    return np.minimum(idx, bins - 1)


def otsu_bin(counts) -> int:
    """Index of the last background bin of the best Otsu split.

    Maximizes the between-class variance ``w0 * w1 * (mu1 - mu0)**2`` over
    the splits that leave both classes nonempty; ties go to the smallest
    index. Scores are compared in exact integer arithmetic, which is
    possible because ``N**2 * w0 * w1 * (mu1 - mu0)**2`` equals
    ``(n0 * S - N * s0)**2 / (n0 * n1)``.
    """
    counts = [int(c) for c in np.asarray(counts).ravel()]
    if any(c < 0 for c in counts):
        raise ValueError("histogram counts must be nonnegative")
    total = sum(counts)
    moment = sum(i * c for i, c in enumerate(counts))
    best = None
    best_num, best_den = -1, 1
    n0 = s0 = 0
    for k, c in enumerate(counts[:-1]):
        n0 += c
        s0 += k * c
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n0 * moment - total * s0) ** 2
        den = n0 * n1
        if best is None or num * best_den > best_num * den:
            best, best_num, best_den = k, num, den
    if best is None:
        raise ConstantField("histogram has fewer than two occupied bins")
    return best


def otsu_threshold(field: np.ndarray, bins: int = 256) -> float:
    """Otsu threshold of a real-valued field.

    The histogram uses ``bins`` uniform bins spanning the field's range.
    The returned value is the largest sample in the background class, so
    ``field > threshold`` reproduces the histogram split exactly.

    Raises
    ------
    ConstantField
        If every sample is equal.
    """
    values = np.asarray(field, dtype=np.float64).ravel()
    if values.size == 0 or values.min() == values.max():
        raise ConstantField("field is constant; no threshold separates it")
    idx = histogram_bins(values, bins)
    k = otsu_bin(np.bincount(idx, minlength=bins))
    return float(values[idx <= k].max())


@dataclass
class SegmentationParams:
    """Tunable knobs of the classical pipeline.

    ``hsv_ranges`` is ``(h_lo, h_hi, s_lo, s_hi, v_lo, v_hi)``; a hue range
    with ``h_lo > h_hi`` wraps through 0.
    """

    close_se: StructuringElement = field(default_factory=lambda: StructuringElement("disk", 2))
    open_se: StructuringElement = field(default_factory=lambda: StructuringElement("disk", 2))
    min_minor_axis: float = 4.0
    hsv_ranges: tuple = (0.0, 1.0, 0.02, 1.0, 0.0, 0.98)
    border_margin: int = 0
    target_mpp: float = 8.0

    def __post_init__(self):
        self.hsv_ranges = tuple(float(v) for v in self.hsv_ranges)
        if len(self.hsv_ranges) != 6:
            raise ValueError("hsv_ranges needs six values")
        if any(not 0.0 <= v <= 1.0 for v in self.hsv_ranges):
            raise ValueError(f"hsv_ranges must lie in [0, 1], got {self.hsv_ranges}")
        s_lo, s_hi, v_lo, v_hi = self.hsv_ranges[2:]
        if s_lo > s_hi or v_lo > v_hi:
            raise ValueError("saturation and value ranges must have lo <= hi")
        if not self.target_mpp > 0:
            raise ValueError("target_mpp must be positive")
        if self.min_minor_axis < 0 or self.border_margin < 0:
            raise ValueError("min_minor_axis and border_margin must be >= 0")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = " ".join(repr(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SegmentationParams":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ParseError(f"line {lineno}: unknown key {key!r}")
            try:
                if key in ("close_se", "open_se"):
                    kwargs[key] = StructuringElement.parse(value)
                elif key == "hsv_ranges":
                    kwargs[key] = tuple(float(v) for v in value.split())
                elif key == "border_margin":
                    kwargs[key] = int(value)
                else:
                    kwargs[key] = float(value)
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ParseError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "SegmentationParams":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def default(cls) -> "SegmentationParams":
        text = resources.files("tissuetk.data").joinpath("default.params").read_text()
        return cls.from_text(text)


@dataclass
class PipelineTrace:
    """Per-step snapshots (steps 2 to 8) plus the chosen Otsu threshold."""

    snapshots: dict = field(default_factory=dict)
    threshold: float = math.nan
    timings_ms: dict = field(default_factory=dict)
    empty: bool = False
    empty_reason: str = ""

    def export(self, directory, slide_id: str = "") -> Path:
        """Write one PNG per snapshot plus ``trace.json``.

        Timings are wall-clock measurements, so ``trace.json`` is not
        byte-stable across runs.
        """
        from PIL import Image

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {}
        for i, name in enumerate(STEP_NAMES, start=2):
            if name not in self.snapshots:
                continue
            fname = f"step{i}_{name}.png"
            Image.fromarray(self.snapshots[name].astype(np.uint8) * 255).save(directory / fname)
            files[name] = fname
        meta = {
            "slide_id": slide_id,
            "threshold": None if math.isnan(self.threshold) else self.threshold,
            "response": "signed_laplacian",
            "empty": self.empty,
            "empty_reason": self.empty_reason,
            "snapshots": files,
            "timings_ms": self.timings_ms,
        }
        (directory / "trace.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return directory


def _in_range(x: np.ndarray, lo: float, hi: float, wrap: bool = False) -> np.ndarray:
    if wrap and lo > hi:
        return (x >= lo) | (x <= hi)
    return (x >= lo) & (x <= hi)


def hsv_filter(m, img: RasterImage, ranges) -> np.ndarray:
    """Keep mask pixels whose HSV triplet lies inside all three ranges."""
    bits = np.asarray(m.bits if isinstance(m, BinaryMask) else m, dtype=bool)
    if bits.shape != (img.height, img.width):
        raise DimensionMismatch(f"mask {bits.shape} vs image {(img.height, img.width)}")
    h_lo, h_hi, s_lo, s_hi, v_lo, v_hi = ranges
    h, s, v = rgb_to_hsv(img)
    inside = (
        _in_range(h, h_lo, h_hi, wrap=True)
        & _in_range(s, s_lo, s_hi)
        & _in_range(v, v_lo, v_hi)
    )
    return bits & inside


def laplacian_response(img: RasterImage) -> np.ndarray:
    return convolve2d(to_grayscale(img), MEHRSTELLEN)


def segment_tissue(img: RasterImage, params: SegmentationParams | None = None,
                   slide_id: str = "") -> tuple[BinaryMask, PipelineTrace]:
    """Run the eight-step thresholding pipeline on an image at ``target_mpp``.

    A constant Laplacian response (for instance a perfectly blank slide)
    does not raise: it yields an all-background mask with ``trace.empty``
    set. Any run that ends with no tissue is flagged the same way.
    """
    p = params or SegmentationParams.default()
    for mpp in (img.mpp_x, img.mpp_y):
        if abs(mpp - p.target_mpp) > 0.01 * p.target_mpp:
            raise ValueError(
                f"image is at {img.mpp_x}x{img.mpp_y} um/px, pipeline expects {p.target_mpp}")

    trace = PipelineTrace()
    shape = (img.height, img.width)

    def timed(name, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        trace.timings_ms[name] = (time.perf_counter() - t0) * 1e3
        trace.snapshots[name] = out
        return out

    t0 = time.perf_counter()
    response = laplacian_response(img)
    trace.timings_ms["laplacian"] = (time.perf_counter() - t0) * 1e3

    try:
        t0 = time.perf_counter()
        trace.threshold = otsu_threshold(response)
        bits = response > trace.threshold
        trace.timings_ms["threshold"] = (time.perf_counter() - t0) * 1e3
        trace.snapshots["threshold"] = bits
    except ConstantField:
        empty = np.zeros(shape, dtype=bool)
        for name in STEP_NAMES:
            trace.snapshots[name] = empty
        trace.empty = True
        trace.empty_reason = "constant_field"
        return BinaryMask(empty, img.mpp_x, img.mpp_y, slide_id), trace

    bits = timed("close", morph.close, bits, p.close_se)
    bits = timed("open", morph.open, bits, p.open_se)
    bits = timed("fill_holes", morph.fill_holes, bits)
    bits = timed("remove_thin", morph.remove_thin_objects, bits, p.min_minor_axis)
    bits = timed("hsv_filter", hsv_filter, bits, img, p.hsv_ranges)
    bits = timed("clear_border", morph.clear_border, bits, p.border_margin)

    if not bits.any():
        trace.empty = True
        trace.empty_reason = "no_tissue"
    return BinaryMask(bits, img.mpp_x, img.mpp_y, slide_id), trace

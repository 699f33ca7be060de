"""Slide pyramids on disk and binary mask files.

A slide is a directory holding ``slide.json`` and one ordinary image file
per pyramid level::

    {"slide_id": "S001", "cohort": "A", "scanner": "X", "reference_grade": 2,
     "levels": [{"path": "level0.png", "width": 512, "height": 512,
                 "mpp_x": 4.0, "mpp_y": 4.0}, ...]}

Masks are single-channel PNGs (0 background, 255 tissue) with a JSON
sidecar at ``<mask path>.json`` holding ``slide_id``, ``mpp_x`` and ``mpp_y``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InconsistentPyramid, MissingLevel, ParseError, TargetFinerThanSource
from .raster import BinaryMask, RasterImage, lanczos_resample

MANIFEST_NAME = "slide.json"
DIMENSION_TOLERANCE = 0.02
MPP_MATCH_TOLERANCE = 0.001


@dataclass
class LevelInfo:
    path: Path
    width: int
    height: int
    mpp_x: float
    mpp_y: float


@dataclass
class PyramidSlide:
    slide_id: str
    levels: list[LevelInfo]
    cohort: str = ""
    scanner: str = ""
    reference_grade: int | None = None
    manifest_path: Path | None = field(default=None, repr=False)

    def read_level(self, index: int) -> RasterImage:
        lvl = self.levels[index]
        with Image.open(lvl.path) as im:
            data = np.asarray(im.convert("RGB"))
        return RasterImage(data, lvl.mpp_x, lvl.mpp_y)


def _manifest_file(path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def open_slide(manifest_path) -> PyramidSlide:
    """Parse and validate a slide manifest (file or slide directory)."""
    path = _manifest_file(manifest_path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc

    try:
        slide_id = str(doc["slide_id"])
        raw_levels = doc["levels"]
        levels = [
            LevelInfo(
                path=path.parent / lv["path"],
                width=int(lv["width"]),
                height=int(lv["height"]),
                mpp_x=float(lv["mpp_x"]),
                mpp_y=float(lv["mpp_y"]),
            )
            for lv in raw_levels
        ]
        grade = doc.get("reference_grade")
        grade = None if grade is None else int(grade)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed manifest ({exc})") from exc
    if not slide_id:
        raise ParseError(f"{path}: empty slide_id")
    if not levels:
        raise ParseError(f"{path}: no levels")
    if grade is not None and not 0 <= grade <= 5:
        raise ParseError(f"{path}: reference_grade {grade} outside 0-5")

    for lv in levels:
        if lv.width < 1 or lv.height < 1 or lv.mpp_x <= 0 or lv.mpp_y <= 0:
            raise InconsistentPyramid(f"{path}: invalid level geometry {lv}")
    levels.sort(key=lambda lv: (lv.mpp_x, lv.mpp_y))
    for a, b in zip(levels, levels[1:]):
        if not (b.mpp_x > a.mpp_x and b.mpp_y > a.mpp_y):
            raise InconsistentPyramid(f"{path}: level mpp values must strictly increase")
    base = levels[0]
    extent_x = base.width * base.mpp_x
    extent_y = base.height * base.mpp_y
    for lv in levels[1:]:
        if (abs(lv.width * lv.mpp_x - extent_x) > DIMENSION_TOLERANCE * extent_x
                or abs(lv.height * lv.mpp_y - extent_y) > DIMENSION_TOLERANCE * extent_y):
            raise InconsistentPyramid(
                f"{path}: level {lv.path.name} {lv.width}x{lv.height} at {lv.mpp_x} um/px "
                f"disagrees with base extent {extent_x:.1f}x{extent_y:.1f} um")

    for lv in levels:
        if not lv.path.is_file():
            raise MissingLevel(f"{path}: level image {lv.path} not found")
        with Image.open(lv.path) as im:
            if im.size != (lv.width, lv.height):
                raise InconsistentPyramid(
                    f"{lv.path}: image is {im.size[0]}x{im.size[1]}, manifest says "
                    f"{lv.width}x{lv.height}")

    return PyramidSlide(
        slide_id=slide_id,
        levels=levels,
        cohort=str(doc.get("cohort", "")),
        scanner=str(doc.get("scanner", "")),
        reference_grade=grade,
        manifest_path=path,
    )


def write_slide(directory, slide_id: str, images: list[RasterImage], cohort: str = "",
                scanner: str = "", reference_grade: int | None = None) -> Path:
    """Write a slide directory from in-memory level images (any order)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    levels = []
    for i, img in enumerate(sorted(images, key=lambda im: im.mpp_x)):
        name = f"level{i}.png"
        Image.fromarray(img.data if img.channels == 3 else img.data[:, :, 0]).save(directory / name)
        levels.append({"path": name, "width": img.width, "height": img.height,
                       "mpp_x": img.mpp_x, "mpp_y": img.mpp_y})
    doc = {"slide_id": slide_id, "cohort": cohort, "scanner": scanner}
    if reference_grade is not None:
        doc["reference_grade"] = int(reference_grade)
    doc["levels"] = levels
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _matches(a: float, b: float) -> bool:
    return abs(a - b) <= MPP_MATCH_TOLERANCE * b


def select_level(slide: PyramidSlide, target_mpp: float, target_mpp_y: float | None = None) -> int:
    """Index of the coarsest level that is still at least as fine as the target."""
    ty = target_mpp if target_mpp_y is None else target_mpp_y
    best = None
    for i, lv in enumerate(slide.levels):
        ok_x = lv.mpp_x <= target_mpp or _matches(lv.mpp_x, target_mpp)
        ok_y = lv.mpp_y <= ty or _matches(lv.mpp_y, ty)
        if ok_x and ok_y:
            best = i
    if best is None:
        finest = slide.levels[0]
        raise TargetFinerThanSource(
            f"target {target_mpp}x{ty} um/px is finer than the finest level "
            f"({finest.mpp_x}x{finest.mpp_y})")
    return best


def output_size(level: LevelInfo, target_mpp: float, target_mpp_y: float | None = None) -> tuple[int, int]:
    ty = target_mpp if target_mpp_y is None else target_mpp_y
    w = max(1, _round_half_up(level.width * level.mpp_x / target_mpp))
    h = max(1, _round_half_up(level.height * level.mpp_y / ty))
    return w, h


def read_at_mpp(slide: PyramidSlide, target_mpp: float, target_mpp_y: float | None = None) -> RasterImage:
    """Raster of the whole slide at ``target_mpp``.

    Picks the level with the largest mpp not exceeding the target and
    Lanczos-downsamples it. A level within 0.1% of the target is returned
    as stored.
    """
    ty = target_mpp if target_mpp_y is None else target_mpp_y
    idx = select_level(slide, target_mpp, ty)
    lv = slide.levels[idx]
    img = slide.read_level(idx)
    if _matches(lv.mpp_x, target_mpp) and _matches(lv.mpp_y, ty):
        return img
    w, h = output_size(lv, target_mpp, ty)
    return lanczos_resample(img, w, h)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_mask(mask: BinaryMask, path, extra: dict | None = None) -> Path:
    """Write ``mask`` as a 0/255 PNG plus its JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path)
    meta = {"slide_id": mask.slide_id, "mpp_x": mask.mpp_x, "mpp_y": mask.mpp_y}
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_mask(path) -> BinaryMask:
    path = Path(path)
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
        mpp_x = float(meta["mpp_x"])
        mpp_y = float(meta["mpp_y"])
    except FileNotFoundError as exc:
        raise ParseError(f"{side}: sidecar missing") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{side}: malformed sidecar ({exc})") from exc
    with Image.open(path) as im:
        data = np.asarray(im)
    if data.ndim != 2:
        raise ParseError(f"{path}: mask must be single-channel")
    if not np.isin(data, (0, 255)).all():
        raise ParseError(f"{path}: mask contains values other than 0 and 255")
    return BinaryMask(data == 255, mpp_x, mpp_y, str(meta.get("slide_id", "")))

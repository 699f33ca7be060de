"""Synthetic slide corpora with known tissue masks and planted grades.

Slides are H&E-like: a near-white glass background with faint sensor noise
and one or more stained tissue fragments (pink stroma speckled with dark
nuclei). Slide kinds:

``standard``   tissue fragments away from the edges, plus debris specks/fibres
``pale``       a large, almost unstained fragment next to a small stained one
``pale_only``  only an almost unstained fragment
``blank``      background only
``border``     a stained fragment cut by the slide edge next to an interior one
``b_fail``     a standard slide whose second-method mask is planted empty

The second-method masks (``masks_b``) stand in for an external detector:
the true mask nudged by one pixel of dilation or erosion, or empty where a
failure is planted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import morphology as morph
from .concordance import PredictionRow, PredictionSet, majority_vote, write_predictions
from .pyramid import write_mask, write_slide
from .raster import BinaryMask, RasterImage, lanczos_resample

SCHEDULE = {3: "pale", 5: "b_fail", 7: "border", 11: "blank", 17: "pale_only", 20: "b_fail"}
SCHEDULE_PERIOD = 25

BACKGROUND_RGB = (243.0, 243.0, 244.0)
STROMA_RGB = (210.0, 140.0, 180.0)
NUCLEUS_RGB = (105.0, 55.0, 145.0)
PALE_RGB = (247.0, 245.0, 247.0)

FINE_MPP = 4.0
MASK_MPP = 8.0
COARSE_MPP = 16.0


@dataclass
class Fragment:
    """Star-shaped region: radius modulated by a few angular harmonics (micrometres)."""

    cx: float
    cy: float
    radius: float
    amps: tuple
    phases: tuple
    pale: bool = False

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx, dy = x - self.cx, y - self.cy
        theta = np.arctan2(dy, dx)
        r = np.full_like(theta, self.radius)
        for k, (a, p) in enumerate(zip(self.amps, self.phases), start=2):
            r = r + self.radius * a * np.cos(k * theta + p)
        return dx * dx + dy * dy <= r * r


def kind_for_index(i: int) -> str:
    return SCHEDULE.get(i % SCHEDULE_PERIOD, "standard")


def _fragment(rng, extent, radius, margin, pale=False, at=None) -> Fragment:
    if at is None:
        lo = margin + radius * 1.3
        hi = extent - lo
        cx, cy = rng.uniform(lo, hi, size=2)
    else:
        cx, cy = at
    amps = tuple(rng.uniform(0.0, 0.08, size=3))
    phases = tuple(rng.uniform(0, 2 * np.pi, size=3))
    return Fragment(float(cx), float(cy), float(radius), amps, phases, pale)


def _layout(kind: str, rng, extent: float) -> list[Fragment]:
    # sizes are tuned for a 2048 um slide and scale with the extent
    u = extent / 2048.0
    if kind == "blank":
        return []
    if kind == "pale":
        return [
            _fragment(rng, extent, 560.0 * u, 0.0, pale=True, at=(extent * 0.38, extent * 0.5)),
            _fragment(rng, extent, 240.0 * u, 0.0, at=(extent * 0.80, extent * 0.5)),
        ]
    if kind == "pale_only":
        return [_fragment(rng, extent, 520.0 * u, 200.0 * u, pale=True)]
    if kind == "border":
        edge = _fragment(rng, extent, 300.0 * u, 0.0, at=(extent * 0.5, 60.0 * u))
        inner = _fragment(rng, extent, 300.0 * u, 0.0, at=(extent * 0.5, extent * 0.68))
        return [edge, inner]
    n = int(rng.integers(1, 4))
    frags = []
    for _ in range(n):
        radius = rng.uniform(240.0, 420.0) if n > 1 else rng.uniform(380.0, 600.0)
        frags.append(_fragment(rng, extent, radius * u, 120.0 * u))
    return frags


def render(kind: str, rng: np.random.Generator, size: int = 512, mpp: float = FINE_MPP):
    """Render one slide at ``mpp``; returns ``(rgb uint8, fragments)``."""
    extent = size * mpp
    frags = _layout(kind, rng, extent)
    centers = (np.arange(size) + 0.5) * mpp
    X, Y = np.meshgrid(centers, centers)

    img = np.empty((size, size, 3))
    img[:] = BACKGROUND_RGB
    img += rng.normal(0.0, 0.6, size=img.shape)

    stroma = np.zeros((size, size), dtype=bool)
    pale = np.zeros((size, size), dtype=bool)
    for f in frags:
        inside = f.contains(X, Y)
        if f.pale:
            pale |= inside
        else:
            stroma |= inside

    if stroma.any():
        shade = ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(size, size)), 1.5)
        shade /= shade.std() + 1e-12
        tissue = np.asarray(STROMA_RGB) * (1.0 + 0.06 * shade)[..., None]
        nuclei = ndimage.gaussian_filter(rng.random((size, size)), 0.7) > 0.5
        tissue[nuclei] = NUCLEUS_RGB
        tissue += rng.normal(0.0, 4.0, size=tissue.shape)
        img[stroma] = tissue[stroma]
    if pale.any():
        faint = np.asarray(PALE_RGB) + rng.uniform(-0.6, 0.6, size=(size, size, 1))
        img[pale] = np.broadcast_to(faint, img.shape)[pale]

    if kind in ("standard", "b_fail"):
        # debris: sub-cellular specks and thin fibres on the glass
        for _ in range(int(rng.integers(2, 6))):
            cx, cy = rng.uniform(0, size, size=2)
            r = rng.uniform(0.6, 1.4)
            speck = (X / mpp - cx) ** 2 + (Y / mpp - cy) ** 2 <= r * r
            img[speck] = (90.0, 80.0, 90.0)
        for _ in range(int(rng.integers(0, 3))):
            x0, y0 = rng.uniform(0, size, size=2)
            ang = rng.uniform(0, np.pi)
            t = np.linspace(0, rng.uniform(20, 60), 200)
            xs = np.clip((x0 + t * np.cos(ang)).astype(int), 0, size - 1)
            ys = np.clip((y0 + t * np.sin(ang)).astype(int), 0, size - 1)
            img[ys, xs] = (120.0, 110.0, 120.0)

    return np.clip(np.rint(img), 0, 255).astype(np.uint8), frags


def truth_mask(frags: list[Fragment], size: int, mpp: float) -> np.ndarray:
    centers = (np.arange(size) + 0.5) * mpp
    X, Y = np.meshgrid(centers, centers)
    out = np.zeros((size, size), dtype=bool)
    for f in frags:
        out |= f.contains(X, Y)
    return out


def second_method_mask(truth: np.ndarray, kind: str, rng) -> np.ndarray:
    if kind in ("b_fail", "blank"):
        return np.zeros_like(truth)
    se = morph.StructuringElement("disk", 1)
    return morph.dilate(truth, se) if rng.random() < 0.5 else morph.erode(truth, se)


def planted_grades(rng, n_votes: int = 30) -> tuple[int, int, int]:
    truth = int(rng.choice(6, p=[0.45, 0.2, 0.12, 0.1, 0.07, 0.06]))

    def vote():
        jitter = rng.choice([-1, 0, 0, 0, 0, 1])
        return int(np.clip(truth + jitter, 0, 5))

    pred_a = majority_vote([vote() for _ in range(n_votes)])
    pred_b = majority_vote([vote() for _ in range(n_votes)])
    if rng.random() < 0.1:
        pred_b = int(np.clip(pred_b + rng.choice([-1, 1]), 0, 5))
    return truth, pred_a, pred_b


@dataclass
class PhantomSlide:
    slide_id: str
    kind: str
    cohort: str
    group_id: str
    levels: list[RasterImage]
    truth: BinaryMask
    mask_b: BinaryMask
    grades: tuple[int, int, int]


def make_slide(i: int, seed: int, size: int = 512) -> PhantomSlide:
    """Deterministic phantom number ``i``; independent of corpus size."""
    rng = np.random.default_rng([seed, i])
    kind = kind_for_index(i)
    slide_id = f"P{i:04d}"
    cohort = "slide_level" if i % 2 == 0 else "patient_level"
    group_id = slide_id if cohort == "slide_level" else f"PT{i // 4:04d}"

    rgb, frags = render(kind, rng, size, FINE_MPP)
    fine = RasterImage(rgb, FINE_MPP, FINE_MPP)
    coarse_size = max(1, round(size * FINE_MPP / COARSE_MPP))
    coarse = lanczos_resample(fine, coarse_size, coarse_size)
    mask_size = round(size * FINE_MPP / MASK_MPP)
    truth = truth_mask(frags, mask_size, MASK_MPP)
    mask_b = second_method_mask(truth, kind, rng)
    return PhantomSlide(
        slide_id=slide_id, kind=kind, cohort=cohort, group_id=group_id,
        levels=[fine, coarse],
        truth=BinaryMask(truth, MASK_MPP, MASK_MPP, slide_id),
        mask_b=BinaryMask(mask_b, MASK_MPP, MASK_MPP, slide_id),
        grades=planted_grades(rng),
    )


def planted_failures(kind: str) -> tuple[bool, bool]:
    """Expected (classical pipeline fails, second method fails) for a kind."""
    return kind in ("blank", "pale_only"), kind in ("blank", "b_fail")


def write_corpus(out, n_slides: int, seed: int = 0, size: int = 512) -> dict:
    """Write slides, true masks, second-method masks and predictions under ``out``.

    Layout::

        slides/<id>/slide.json, level*.png
        truth/<id>.png(.json)
        masks_b/<id>.png(.json)
        predictions.csv
        corpus.json
    """
    if n_slides < 1:
        raise ValueError("n_slides must be >= 1")
    out = Path(out)
    entries = []
    rows = []
    for i in range(n_slides):
        ph = make_slide(i, seed, size)
        truth_grade, pred_a, pred_b = ph.grades
        write_slide(out / "slides" / ph.slide_id, ph.slide_id, ph.levels,
                    cohort=ph.cohort, scanner="phantom", reference_grade=truth_grade)
        write_mask(ph.truth, out / "truth" / f"{ph.slide_id}.png")
        write_mask(ph.mask_b, out / "masks_b" / f"{ph.slide_id}.png")
        fail_a, fail_b = planted_failures(ph.kind)
        entries.append({
            "slide_id": ph.slide_id, "kind": ph.kind, "cohort": ph.cohort,
            "group_id": ph.group_id, "reference_grade": truth_grade,
            "expect_fail_a": fail_a, "expect_fail_b": fail_b,
        })
        rows.append(PredictionRow(ph.slide_id, ph.group_id, ph.cohort, truth_grade, pred_a, pred_b))
    write_predictions(out / "predictions.csv", PredictionSet(rows),
                      header_lines=[f"tool=tissuetk phantom seed={seed}"])
    doc = {"seed": seed, "n_slides": n_slides, "size": size, "slides": entries}
    (out / "corpus.json").write_text(json.dumps(doc, indent=2) + "\n")
    return doc

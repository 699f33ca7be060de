"""Command-line entry point: ``tissuetk <command> ...``.

Commands
--------
segment     classical tissue masks for a set of slides
tile        patch record files gated by tissue masks
eval-masks  failure taxonomy and (with reference masks) pixel metrics
kappa       per-cohort grading concordance of two detection routes
phantom     synthetic slide corpus with known masks and grades

Every command writes into ``--out``; per-slide problems are reported in the
summary outputs instead of aborting the run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .concordance import cohort_kappas, discordance_report, pool_predictions, read_predictions
from .errors import TissueToolkitError
from .metrics import (aggregate_by_cohort, failure_report, pixel_confusion, write_metrics_csv)
from .otsu import SegmentationParams, segment_tissue
from .phantom import write_corpus
from .plotting import plot_kappa_comparison, plot_mask_outlines, plot_metric_distributions
from .pyramid import MANIFEST_NAME, open_slide, read_at_mpp, read_mask, write_mask
from .tiler import TileSpec, extract_records

log = logging.getLogger("tissuetk")


def provenance(seed: int, params_text: str = "") -> dict:
    digest = hashlib.sha256(params_text.encode()).hexdigest()[:16] if params_text else "none"
    return {"tool": "tissuetk", "version": __version__, "params_hash": digest, "seed": seed}


def provenance_line(prov: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in prov.items())


def discover_slides(paths) -> list[Path]:
    """Slide directories named directly or found one level below a directory."""
    found = []
    for p in map(Path, paths):
        if (p / MANIFEST_NAME).is_file():
            found.append(p)
        elif p.is_file() and p.name == MANIFEST_NAME:
            found.append(p.parent)
        elif p.is_dir():
            found.extend(sorted(d for d in p.iterdir() if (d / MANIFEST_NAME).is_file()))
        else:
            raise FileNotFoundError(f"no slide found at {p}")
    return found


def _run(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _write_csv(path, columns, rows, prov) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {provenance_line(prov)}\n")
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


# --- segment -----------------------------------------------------------------

def _segment_one(task):
    slide_dir, params_text, out, prov, want_trace = task
    row = {"slide_id": Path(slide_dir).name, "cohort": "", "status": "error", "threshold": "",
           "tissue_pixels": "", "empty_reason": "", "error": ""}
    try:
        params = SegmentationParams.from_text(params_text)
        slide = open_slide(slide_dir)
        row["slide_id"], row["cohort"] = slide.slide_id, slide.cohort
        img = read_at_mpp(slide, params.target_mpp)
        mask, trace = segment_tissue(img, params, slide.slide_id)
        write_mask(mask, Path(out) / "masks" / f"{slide.slide_id}.png", extra={"provenance": prov})
        if want_trace:
            trace.export(Path(out) / "traces" / slide.slide_id, slide.slide_id)
        row.update(
            status="empty" if trace.empty else "ok",
            threshold="" if trace.empty_reason == "constant_field" else repr(trace.threshold),
            tissue_pixels=int(mask.bits.sum()),
            empty_reason=trace.empty_reason,
        )
    except (TissueToolkitError, OSError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_segment(args) -> int:
    params = SegmentationParams.load(args.params) if args.params else SegmentationParams.default()
    params_text = params.to_text()
    prov = provenance(args.seed, params_text)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    slides = discover_slides(args.slides)
    tasks = [(str(s), params_text, str(out), prov, args.trace) for s in slides]
    rows = sorted(_run(_segment_one, tasks, args.jobs), key=lambda r: r["slide_id"])
    _write_csv(out / "segment_summary.csv",
               ["slide_id", "cohort", "status", "threshold", "tissue_pixels", "empty_reason", "error"],
               rows, prov)
    (out / "params.txt").write_text(params_text)
    n_err = sum(r["status"] == "error" for r in rows)
    n_empty = sum(r["status"] == "empty" for r in rows)
    print(f"segmented {len(rows) - n_err}/{len(rows)} slides; {n_empty} with no tissue detected")
    return 1 if rows and n_err == len(rows) else 0


# --- tile --------------------------------------------------------------------

def _tile_one(task):
    slide_dir, masks_dir, spec, out = task
    row = {"slide_id": Path(slide_dir).name, "n_patches": "", "n_kept": "", "empty": "", "error": ""}
    try:
        slide = open_slide(slide_dir)
        row["slide_id"] = slide.slide_id
        mask = read_mask(Path(masks_dir) / f"{slide.slide_id}.png")
        res = extract_records(slide, mask, spec, Path(out) / "records" / f"{slide.slide_id}.tfrecord")
        row.update(n_patches=res.n_patches, n_kept=res.n_kept, empty=int(res.empty))
    except (TissueToolkitError, OSError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_tile(args) -> int:
    spec = TileSpec(args.patch_size, args.overlap, args.mpp, args.min_tissue)
    prov = provenance(args.seed, repr(spec))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(str(s), args.masks, spec, str(out)) for s in discover_slides(args.slides)]
    rows = sorted(_run(_tile_one, tasks, args.jobs), key=lambda r: r["slide_id"])
    _write_csv(out / "tile_summary.csv", ["slide_id", "n_patches", "n_kept", "empty", "error"],
               rows, prov)
    n_err = sum(bool(r["error"]) for r in rows)
    kept = sum(int(r["n_kept"] or 0) for r in rows)
    print(f"wrote {kept} patches from {len(rows) - n_err}/{len(rows)} slides")
    return 1 if rows and n_err == len(rows) else 0


# --- eval-masks --------------------------------------------------------------

def _load_masks(directory) -> dict:
    return {p.stem: read_mask(p) for p in sorted(Path(directory).glob("*.png"))}


def cmd_eval(args) -> int:
    prov = provenance(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label_a, label_b = args.labels.split(",")
    masks_a = _load_masks(args.masks_a)
    masks_b = _load_masks(args.masks_b)

    slides = {}
    if args.slides:
        for d in discover_slides(args.slides):
            s = open_slide(d)
            slides[s.slide_id] = s
    cohorts = {sid: s.cohort for sid, s in slides.items()}

    report = failure_report(masks_a, masks_b, cohorts)
    doc = report.to_dict(label_a=label_a, label_b=label_b)
    doc["provenance"] = prov
    _write_json(out / "failures.json", doc)
    (out / "failures.txt").write_text(report.to_table(label_a, label_b))
    print(report.to_table(label_a, label_b), end="")

    if args.truth:
        truth = _load_masks(args.truth)
        per_method = {}
        aggregates = {}
        for key, label, masks in (("a", label_a, masks_a), ("b", label_b, masks_b)):
            metrics = [pixel_confusion(masks[sid], truth[sid], sid, cohorts.get(sid, ""))
                       for sid in sorted(masks) if sid in truth]
            write_metrics_csv(out / f"metrics_{key}.csv", metrics, [provenance_line(prov)])
            per_method[label] = metrics
            aggregates[key] = {c: a.to_dict() for c, a in
                               aggregate_by_cohort(metrics, args.replicates, args.seed).items()}
        _write_json(out / "aggregate.json",
                    {"provenance": prov, "methods": {"a": label_a, "b": label_b}, **aggregates})
        plot_metric_distributions(per_method, out / "figures" / "metric_distributions.png")

    if slides:
        for sid in report.excluded_slides:
            if sid not in slides:
                continue
            s = slides[sid]
            rgb = s.read_level(len(s.levels) - 1).data
            plot_mask_outlines(rgb, {label_a: masks_a[sid].bits, label_b: masks_b[sid].bits},
                               out / "figures" / "outlines" / f"{sid}.png",
                               title=f"{sid} ({report.category[sid]})")
    return 0


# --- kappa -------------------------------------------------------------------

def cmd_kappa(args) -> int:
    prov = provenance(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label_a, label_b = args.labels.split(",")
    ps = read_predictions(args.predictions)
    excluded = []
    if args.exclude_from:
        excluded = json.loads(Path(args.exclude_from).read_text())["excluded_slides"]
    results = cohort_kappas(ps, exclude=excluded, replicates=args.replicates, seed=args.seed,
                            pool=not args.no_pool)
    kept = ps.subset(exclude=excluded)
    disc = discordance_report(kept)
    pooled_disc = discordance_report(pool_predictions(kept))
    _write_json(out / "kappa.json", {
        "provenance": prov,
        "methods": {"a": label_a, "b": label_b},
        "excluded_slides": sorted(set(excluded) & {r.slide_id for r in ps}),
        "cohorts": {c: {k: v.to_dict() for k, v in r.items()} for c, r in results.items()},
        "discordance": {
            "slides": {"discordant": disc.n_discordant, "total": disc.n_total,
                       "discordant_malignant": disc.n_discordant_malignant,
                       "malignant": disc.n_malignant},
            "pooled": {"discordant": pooled_disc.n_discordant, "total": pooled_disc.n_total,
                       "discordant_malignant": pooled_disc.n_discordant_malignant,
                       "malignant": pooled_disc.n_malignant},
        },
    })
    disc.write_csv(out / "discordance.csv", [provenance_line(prov)])
    if results:
        plot_kappa_comparison(results, out / "figures" / "kappa.png", labels=(label_a, label_b))
    for cohort, r in results.items():
        a, b = r["a"], r["b"]
        print(f"{cohort:>16}  {label_a} {a.kappa:.4f} [{a.ci_low:.4f}, {a.ci_high:.4f}]  "
              f"{label_b} {b.kappa:.4f} [{b.ci_low:.4f}, {b.ci_high:.4f}]  n={a.n_cases}")
    print(disc.summary())
    return 0


# --- phantom -----------------------------------------------------------------

def cmd_phantom(args) -> int:
    doc = write_corpus(args.out, args.n, args.seed, args.size)
    kinds = {}
    for s in doc["slides"]:
        kinds[s["kind"]] = kinds.get(s["kind"], 0) + 1
    print(f"wrote {doc['n_slides']} phantom slides to {args.out}: "
          + ", ".join(f"{k} {v}" for k, v in sorted(kinds.items())))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tissuetk", description="Tissue detection and evaluation for whole-slide images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="random seed for bootstrap and phantoms; recorded in outputs")

    p = sub.add_parser("segment", help="classical tissue masks")
    p.add_argument("slides", nargs="+", help="slide directories, or directories of them")
    p.add_argument("--params", help="parameter file (default: bundled default.params)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--trace", action="store_true", help="export per-step snapshots")
    common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("tile", help="extract patch record files")
    p.add_argument("slides", nargs="+")
    p.add_argument("--masks", required=True, help="directory of <slide_id>.png masks")
    p.add_argument("--patch-size", type=int, default=512, help="patch edge in pixels")
    p.add_argument("--overlap", type=int, default=0,
                   help="context pixels discarded on each patch edge (0 for training)")
    p.add_argument("--mpp", type=float, default=8.0, help="patch resolution in um/px")
    p.add_argument("--min-tissue", type=float, default=0.10,
                   help="keep patches with at least this tissue fraction")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(p)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("eval-masks", help="failure taxonomy and pixel metrics")
    p.add_argument("--masks-a", required=True)
    p.add_argument("--masks-b", required=True)
    p.add_argument("--truth", help="directory of reference masks")
    p.add_argument("--slides", nargs="*", help="slides for cohort names and outline figures")
    p.add_argument("--labels", default="a,b", help="display names of the two methods")
    p.add_argument("--replicates", type=int, default=1000, help="bootstrap replicates")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kappa", help="grading concordance")
    p.add_argument("predictions", help="CSV slide_id,group_id,cohort,truth_isup,pred_isup_a,pred_isup_b")
    p.add_argument("--exclude-from", help="failures.json from eval-masks")
    p.add_argument("--labels", default="a,b")
    p.add_argument("--replicates", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--no-pool", action="store_true", help="do not pool rows by group_id")
    common(p)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("phantom", help="synthetic corpus")
    p.add_argument("--n", type=int, default=50, help="number of slides")
    p.add_argument("--size", type=int, default=512, help="finest level edge length in pixels")
    common(p)
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "labels", None) and len(args.labels.split(",")) != 2:
        print("--labels needs exactly two comma-separated names", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (TissueToolkitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

import csv
import hashlib
import json
import shutil

import pytest

from tissuetk import __version__
from tissuetk.cli import main
from tissuetk.records import read_records


def tree_digest(root, skip=()):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip:
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(l for l in fh if not l.startswith("#")))


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    # indices 0..11 cover standard, pale, b_fail, border and blank kinds
    assert main(["phantom", "--n", "12", "--seed", "7", "--size", "256", "--out", str(out)]) == 0
    return out


def run_pipeline(corpus, out, jobs=1):
    assert main(["segment", str(corpus / "slides"), "--out", str(out / "seg"),
                 "--jobs", str(jobs), "--seed", "3"]) == 0
    assert main(["tile", str(corpus / "slides"), "--masks", str(out / "seg" / "masks"),
                 "--patch-size", "64", "--overlap", "0", "--mpp", "4.0", "--min-tissue", "0.1",
                 "--jobs", str(jobs), "--out", str(out / "tile")]) == 0
    assert main(["eval-masks", "--masks-a", str(out / "seg" / "masks"),
                 "--masks-b", str(corpus / "masks_b"), "--truth", str(corpus / "truth"),
                 "--slides", str(corpus / "slides"), "--replicates", "50",
                 "--labels", "thresholding,ai", "--out", str(out / "eval")]) == 0
    assert main(["kappa", str(corpus / "predictions.csv"), "--exclude-from",
                 str(out / "eval" / "failures.json"), "--replicates", "50",
                 "--out", str(out / "kappa")]) == 0


def test_pipeline_outputs(corpus, tmp_path):
    run_pipeline(corpus, tmp_path)
    summary = (tmp_path / "seg" / "segment_summary.csv").read_text()
    assert summary.startswith(f"# tool=tissuetk version={__version__} params_hash=")
    assert "seed=3" in summary.splitlines()[0]
    seg = rows(tmp_path / "seg" / "segment_summary.csv")
    assert [r["slide_id"] for r in seg] == sorted(r["slide_id"] for r in seg)
    blank = next(r for r in seg if r["slide_id"] == "P0011")
    assert blank["status"] == "empty" and blank["empty_reason"]

    tiles = rows(tmp_path / "tile" / "tile_summary.csv")
    for r in tiles:
        recs = read_records(tmp_path / "tile" / "records" / f"{r['slide_id']}.tfrecord")
        assert len(recs) == int(r["n_kept"])

    failures = json.loads((tmp_path / "eval" / "failures.json").read_text())
    assert failures["methods"] == {"a": "thresholding", "b": "ai"}
    assert "provenance" in failures
    assert "P0011" in failures["excluded_slides"]
    assert (tmp_path / "eval" / "figures" / "metric_distributions.png").stat().st_size > 0
    assert (tmp_path / "eval" / "figures" / "outlines" / "P0011.png").exists()
    agg = json.loads((tmp_path / "eval" / "aggregate.json").read_text())
    assert set(agg["a"]) == {"patient_level", "slide_level"}

    kappa = json.loads((tmp_path / "kappa" / "kappa.json").read_text())
    assert "all" in kappa["cohorts"]
    assert set(kappa["excluded_slides"]) == set(failures["excluded_slides"])
    assert (tmp_path / "kappa" / "figures" / "kappa.png").exists()
    assert (tmp_path / "kappa" / "discordance.csv").read_text().startswith("# tool=tissuetk")


def test_rerun_byte_identical_and_jobs_independent(corpus, tmp_path):
    run_pipeline(corpus, tmp_path / "one")
    run_pipeline(corpus, tmp_path / "two", jobs=2)
    assert tree_digest(tmp_path / "one") == tree_digest(tmp_path / "two")


def test_segment_with_traces_and_params(corpus, tmp_path):
    params = tmp_path / "p.params"
    params.write_text("# tighter\nmin_minor_axis = 6.0\n")
    assert main(["segment", str(corpus / "slides" / "P0000"), "--params", str(params),
                 "--trace", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "traces" / "P0000" / "trace.json").exists()
    assert "min_minor_axis = 6.0" in (tmp_path / "o" / "params.txt").read_text()


def test_per_slide_errors_do_not_abort(corpus, tmp_path):
    slides = tmp_path / "slides"
    shutil.copytree(corpus / "slides" / "P0000", slides / "P0000")
    shutil.copytree(corpus / "slides" / "P0001", slides / "P0001")
    (slides / "P0001" / "level0.png").unlink()
    assert main(["segment", str(slides), "--out", str(tmp_path / "o")]) == 0
    seg = {r["slide_id"]: r for r in rows(tmp_path / "o" / "segment_summary.csv")}
    assert seg["P0000"]["status"] == "ok"
    assert seg["P0001"]["status"] == "error" and "MissingLevel" in seg["P0001"]["error"]
    (slides / "P0000" / "level0.png").unlink()
    assert main(["segment", str(slides), "--out", str(tmp_path / "o2")]) == 1


def test_eval_slide_mismatch_and_bad_csv(corpus, tmp_path, capsys):
    masks = tmp_path / "few"
    masks.mkdir()
    for name in ("P0000.png", "P0000.png.json"):
        shutil.copy(corpus / "truth" / name, masks / name)
    assert main(["eval-masks", "--masks-a", str(masks), "--masks-b", str(corpus / "masks_b"),
                 "--out", str(tmp_path / "e")]) == 2
    assert "only in" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("slide_id,group_id\nx,y\n")
    assert main(["kappa", str(bad), "--out", str(tmp_path / "k")]) == 2


def test_bad_labels_and_overlap(tmp_path):
    assert main(["kappa", "x.csv", "--labels", "one", "--out", str(tmp_path)]) == 2
    with pytest.raises(ValueError):
        main(["tile", str(tmp_path), "--masks", str(tmp_path), "--patch-size", "64",
              "--overlap", "32", "--out", str(tmp_path / "t")])

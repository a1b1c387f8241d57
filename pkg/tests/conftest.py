import csv
import os
import time
from pathlib import Path

import pytest

from spectrafuse import cli, metrics
from spectrafuse.imagecore import ManifestEntry, StreamManifest

# every match in the session goes through this audit
CONSERVATION = {"frames": 0, "violations": 0}


@pytest.fixture(autouse=True, scope="session")
def _conservation_audit():
    original = metrics.match_frame

    def audited(dets, labels, iou_threshold=0.5, frame_index=None):
        result = original(dets, labels, iou_threshold, frame_index)
        CONSERVATION["frames"] += 1
        if result.tp + result.fn != len(labels) or result.tp + result.fp != len(dets):
            CONSERVATION["violations"] += 1
        return result

    mp = pytest.MonkeyPatch()
    mp.setattr(metrics, "match_frame", audited)
    yield CONSERVATION
    mp.undo()


def make_manifest(stamps, spectrum="LWIR", source="s", base_dir=None, ext="pgm"):
    entries = tuple(ManifestEntry(i, t, f"f_{i:06d}.{ext}") for i, t in enumerate(stamps))
    return StreamManifest(source, spectrum, entries, base_dir)


def run(argv):
    return cli.main([str(a) for a in argv])


def run_pipeline(work: Path) -> dict:
    """synth -> calibrate -> pair -> fuse -> labels -> detect -> eval on treeline and lamps."""
    t0 = time.perf_counter()
    lines = {"LWIR+RGB": [], "LWIR": [], "RGB": []}
    for name, cond in (("treeline", "single"), ("lamps", "multiple")):
        w = work / name
        d = w / "data"
        lw, rg = d / "lwir" / "manifest.txt", d / "rgb" / "manifest.txt"
        assert run(["synth", "--scenario", name, "--out", d]) == 0
        assert run(["calibrate", d / "correspondences.txt", "--out", w / "H.txt"]) == 0
        assert run(["pair", lw, rg, "--out", w / "pairs.txt", "--require-pairs"]) == 0
        assert run(["fuse", "--pairs", w / "pairs.txt", "--homography", w / "H.txt",
                    "--lwir-manifest", lw, "--rgb-manifest", rg, "--out-dir", w / "fused"]) == 0
        assert run(["labels", "--pairs", w / "pairs.txt", "--homography", w / "H.txt",
                    "--lwir-manifest", lw, "--rgb-manifest", rg,
                    "--lwir-labels", d / "labels_lwir.txt", "--rgb-labels", d / "labels_rgb.txt",
                    "--out", w / "labels.txt"]) == 0
        assert run(["detect", lw, "--oracle", "hot_blob", "--pairs", w / "pairs.txt",
                    "--side", "lwir", "--other-manifest", rg, "--homography", w / "H.txt",
                    "--clamp", "612x512", "--out", w / "det_lwir.txt"]) == 0
        assert run(["detect", rg, "--oracle", "dark_blob", "--pairs", w / "pairs.txt",
                    "--side", "rgb", "--other-manifest", lw, "--out", w / "det_rgb.txt"]) == 0
        assert run(["detect", w / "fused" / "manifest.txt", "--oracle", "fused_blob",
                    "--out", w / "det_fused.txt"]) == 0
        for method, det in (("LWIR+RGB", "det_fused"), ("LWIR", "det_lwir"), ("RGB", "det_rgb")):
            lines[method].append(f"{name} {cond} {name}/{det}.txt {name}/labels.txt")
    config = work / "eval.txt"
    config.write_text("".join(f"method {m}\n" + "\n".join(ls) + "\n" for m, ls in lines.items()))
    assert run(["eval", config, "--out", work / "report"]) == 0
    elapsed = time.perf_counter() - t0
    rows = list(csv.DictReader((work / "report.csv").open()))
    return {
        "elapsed": elapsed,
        "text": (work / "report.txt").read_bytes(),
        "csv": (work / "report.csv").read_bytes(),
        "rows": rows,
    }


def cell(rows, metric, condition, ct, method):
    """Mean of one method in one report cell (ours or a baseline)."""
    for r in rows:
        if (r["metric"], r["condition"], float(r["ct"])) == (metric, condition, ct):
            if method == r["ours"]:
                return float(r["ours_mean"])
            if method == r["baseline"]:
                return float(r["baseline_mean"])
    raise KeyError((metric, condition, ct, method))


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """The desk-scale pipeline run twice from scratch into separate directories."""
    os.environ.setdefault("SPECTRAFUSE_THREADS", "0")
    first = run_pipeline(tmp_path_factory.mktemp("pipeline_a"))
    second = run_pipeline(tmp_path_factory.mktemp("pipeline_b"))
    return first, second


# criterion number -> (passed, detail), filled by test_acceptance
CRITERIA: dict = {}


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so the conservation audit sees the whole suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

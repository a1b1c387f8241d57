import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectrafuse.detector_io import (BoundingBox, Detection, DetectorCommand, GroundTruthLabel,
                                     align_labels_to_pairs, filter_by_confidence, format_detections,
                                     iou, map_boxes, merge_labels, read_detections, read_labels,
                                     run_external_detector, write_detections, write_labels)
from spectrafuse.errors import DetectorError, DetectorTimeoutError, FormatError
from spectrafuse.registration import Homography, apply_homography_points

DATA = Path(__file__).parent / "data"
SCRIPT = DATA / "fixture_detector.py"


def det(conf, frame=0, box=(0, 0, 10, 10)):
    return Detection(frame, BoundingBox(*box), conf)


def test_read_single_detection(tmp_path):
    (tmp_path / "d.txt").write_text("0 10 10 20 30 0.87 0\n")
    [d] = read_detections(tmp_path / "d.txt")
    assert d.confidence == 0.87 and d.box == BoundingBox(10, 10, 20, 30)


def test_confidence_out_of_range_names_line(tmp_path):
    (tmp_path / "d.txt").write_text("# header\n0 10 10 20 30 1.3 0\n")
    with pytest.raises(FormatError, match=r"outside \[0, 1\]") as info:
        read_detections(tmp_path / "d.txt")
    assert info.value.line == 2


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 500), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3),
                          st.floats(0.01, 500), st.floats(0.01, 500), st.floats(0, 1),
                          st.integers(0, 3)), max_size=50))
def test_detection_round_trip(tmp_path_factory, rows):
    dets = [Detection(f, BoundingBox(x, y, x + w, y + h), c, k) for f, x, y, w, h, c, k in rows
            if x < x + w and y < y + h]
    p = tmp_path_factory.mktemp("rt") / "d.txt"
    write_detections(dets, p)
    assert read_detections(p) == dets


def test_fifty_random_detections_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    dets = []
    for i in range(50):
        x, y = rng.uniform(0, 600, 2)
        dets.append(Detection(int(rng.integers(0, 300)), BoundingBox(x, y, x + 1 + rng.uniform(0, 50),
                                                                     y + 1 + rng.uniform(0, 50)),
                              float(rng.uniform(0, 1))))
    write_detections(dets, tmp_path / "d.txt")
    assert read_detections(tmp_path / "d.txt") == dets


def test_labels_examples(tmp_path):
    p = tmp_path / "l.txt"
    p.write_text("")
    assert read_labels(p) == []
    p.write_text("5 0 0 10 10 0\n")
    assert read_labels(p) == [GroundTruthLabel(5, BoundingBox(0, 0, 10, 10), 0)]
    p.write_text("0 20 0 10 10 0\n")
    with pytest.raises(FormatError) as info:
        read_labels(p)
    assert info.value.line == 1
    labels = [GroundTruthLabel(3, BoundingBox(1.5, 2, 3, 4.25), 0)]
    write_labels(labels, p)
    assert read_labels(p) == labels


@pytest.mark.parametrize("line", [
    "0 1 2 3 4 0.5",            # too few fields
    "0 1 2 3 4 0.5 0 9",        # too many
    "x 1 2 3 4 0.5 0",          # non-integer frame
    "0 1 2 3 4 0.5 zero",       # non-integer class
    "-1 1 2 3 4 0.5 0",         # negative frame
    "0 nan 2 3 4 0.5 0",        # non-finite
    "0 1 2 3 4 -0.1 0",         # confidence below range
    "0 3 2 1 4 0.5 0",          # inverted x
])
def test_detection_line_errors(tmp_path, line):
    (tmp_path / "d.txt").write_text("0 0 0 1 1 0.5 0\n" + line + "\n")
    with pytest.raises(FormatError) as info:
        read_detections(tmp_path / "d.txt")
    assert info.value.line == 2


def test_box_invariants():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 1)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 2e6, 1)
    with pytest.raises(ValueError):
        Detection(0, BoundingBox(0, 0, 1, 1), 1.5)


def test_iou_examples():
    a = BoundingBox(0, 0, 2, 2)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(5, 5, 6, 6)) == 0.0
    assert iou(a, BoundingBox(1, 0, 3, 2)) == pytest.approx(1 / 3)


# --------------------------------------------------------------------------
# filtering and mapping

def test_filter_inclusive():
    dets = [det(0.4), det(0.5), det(0.6)]
    assert [d.confidence for d in filter_by_confidence(dets, 0.5)] == [0.5, 0.6]
    assert filter_by_confidence(dets, 0) == dets
    assert filter_by_confidence([det(0.99)], 1) == []
    with pytest.raises(ValueError):
        filter_by_confidence(dets, 1.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=20), st.floats(0, 1), st.floats(0, 1))
def test_filter_monotone(confs, c1, c2):
    lo, hi = sorted((c1, c2))
    dets = [det(c, i) for i, c in enumerate(confs)]
    assert set(filter_by_confidence(dets, hi)) <= set(filter_by_confidence(dets, lo))


def test_map_boxes_identity_and_translation():
    boxes = [det(0.5, box=(1, 2, 3, 4)), det(0.7, box=(10, 10, 20, 20))]
    assert map_boxes(Homography.identity(), boxes, 100, 100) == boxes
    [moved] = map_boxes(Homography.translation(10, 5), [det(1, box=(0, 0, 10, 10))], 100, 100)
    assert moved.box == BoundingBox(10, 5, 20, 15)


def test_map_boxes_perspective_matches_corner_oracle():
    h = Homography([[1.1, 0.05, 3], [-0.02, 0.95, 7], [2e-4, -1e-4, 1]])
    rng = np.random.default_rng(5)
    items = []
    for _ in range(20):
        x, y = rng.uniform(0, 400, 2)
        items.append(det(0.5, box=(x, y, x + 30, y + 20)))
    mapped = map_boxes(h, items, 1000, 1000)
    assert len(mapped) == len(items)
    for src, out in zip(items, mapped):
        pts = apply_homography_points(h, src.box.corners())
        assert out.box == BoundingBox(max(0.0, pts[:, 0].min()), max(0.0, pts[:, 1].min()),
                                      pts[:, 0].max(), pts[:, 1].max())


def test_map_boxes_clamps_and_drops():
    h = Homography.translation(-50, 0)
    out = map_boxes(h, [det(1, box=(0, 0, 10, 10)), det(1, box=(45, 0, 60, 10))], 100, 100)
    assert [d.box for d in out] == [BoundingBox(0, 0, 10, 10)]


def test_merge_labels_examples():
    a = GroundTruthLabel(0, BoundingBox(0, 0, 10, 10))
    b = GroundTruthLabel(1, BoundingBox(0, 0, 10, 10))
    assert merge_labels([a], [b]) == [a, b]
    assert merge_labels([a], [a]) == [a]
    low = GroundTruthLabel(0, BoundingBox(0, 0, 10, 10))
    shifted = GroundTruthLabel(0, BoundingBox(5, 0, 15, 10))   # IoU 1/3
    assert 0.3 <= iou(low.box, shifted.box) < 0.5
    assert merge_labels([low], [shifted]) == [low, shifted]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 60), st.integers(0, 60)),
                max_size=8),
       st.lists(st.tuples(st.integers(0, 3), st.integers(0, 60), st.integers(0, 60)),
                max_size=8))
def test_merge_never_keeps_secondary_duplicates(prim, sec):
    mk = lambda f, x, y: GroundTruthLabel(f, BoundingBox(x, y, x + 12, y + 12))
    primary = [mk(*t) for t in prim]
    secondary = [mk(*t) for t in sec]
    merged = merge_labels(primary, secondary)
    kept_secondary = [s for s in merged if s not in primary]
    for s in kept_secondary:
        assert all(iou(s.box, p.box) < 0.5 for p in primary if p.frame_index == s.frame_index)
    assert all(p in merged for p in primary)


def test_align_labels_to_pairs():
    from conftest import make_manifest
    from spectrafuse.sync import pair_streams
    lw = make_manifest([0, 33_333_333], "LWIR")
    rg = make_manifest([0, 33_333_333], "RGB")
    pairs = pair_streams(lw, rg)
    lwir_labels = [GroundTruthLabel(1, BoundingBox(0, 0, 10, 10))]
    rgb_labels = [GroundTruthLabel(0, BoundingBox(50, 50, 60, 60)),
                  GroundTruthLabel(1, BoundingBox(10, 5, 20, 15))]
    merged = align_labels_to_pairs(pairs, lwir_labels, rgb_labels,
                                   Homography.translation(10, 5), 100, 100)
    # the mapped LWIR label duplicates the RGB one on pair 1
    assert merged == rgb_labels


# --------------------------------------------------------------------------
# external detector

def test_command_template_validation():
    with pytest.raises(ValueError):
        DetectorCommand(("tool", "{manifest}"))
    with pytest.raises(ValueError):
        DetectorCommand(("tool", "{manifest}", "{out}", "{out}"))
    with pytest.raises(ValueError):
        DetectorCommand(("t", "{manifest}", "{out}"), timeout_s=0)
    cmd = DetectorCommand.from_string("tool --in={manifest} '{out}'")
    assert cmd.render("m.txt", "o.txt") == ["tool", "--in=m.txt", "o.txt"]


def _cmd(extra="", timeout=30.0):
    return DetectorCommand.from_string(
        f"{sys.executable} {SCRIPT} --manifest {{manifest}} --out {{out}} {extra}", timeout)


@pytest.fixture
def manifest(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("spectrum=FUSED source=x\n0 0 a.ppm\n1 1 b.ppm\n")
    return p


def test_fixture_detector(tmp_path, manifest):
    dets = run_external_detector(_cmd(f"--fixture {DATA / 'fixture_detections.txt'}"),
                                 manifest, tmp_path / "out.txt")
    assert dets == read_detections(DATA / "fixture_detections.txt")
    assert len(dets) == 2


def test_failing_detector(tmp_path, manifest):
    with pytest.raises(DetectorError) as info:
        run_external_detector(_cmd("--fail"), manifest, tmp_path / "out.txt")
    assert info.value.returncode == 1
    assert "model weights not found" in info.value.stderr
    assert "status 1" in str(info.value)


def test_detector_timeout(tmp_path, manifest):
    with pytest.raises(DetectorTimeoutError):
        run_external_detector(_cmd("--sleep 5 --no-output", timeout=0.1), manifest,
                              tmp_path / "out.txt")


def test_detector_without_output(tmp_path, manifest):
    with pytest.raises(DetectorError, match="no output"):
        run_external_detector(_cmd("--no-output"), manifest, tmp_path / "out.txt")


def test_detector_with_malformed_output(tmp_path, manifest):
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1 2 3\n")
    with pytest.raises(FormatError):
        run_external_detector(_cmd(f"--fixture {bad}"), manifest, tmp_path / "out.txt")


def test_detector_missing_binary_or_manifest(tmp_path, manifest):
    cmd = DetectorCommand(("/nonexistent/tool", "{manifest}", "{out}"))
    with pytest.raises(DetectorError):
        run_external_detector(cmd, manifest, tmp_path / "o.txt")
    with pytest.raises(FileNotFoundError):
        run_external_detector(cmd, tmp_path / "missing.txt", tmp_path / "o.txt")


def test_format_header():
    assert format_detections([]).startswith("# frame_index")

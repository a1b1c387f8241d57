import csv
import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_counts, random_frame
from spectrafuse.detector_io import BoundingBox, Detection, GroundTruthLabel
from spectrafuse.errors import EvaluationDomainError, FormatError, ReportError
from spectrafuse.metrics import (COMBINED, MULTIPLE, SINGLE, MetricRow, ScenarioMetrics,
                                 aggregate_condition, build_rows, detection_rate, evaluate_method,
                                 evaluate_scenario, false_alarm_rate, match_frame,
                                 read_eval_config, render_report, variation)

BOX = BoundingBox(0, 0, 10, 10)


def lab(frame=0, box=BOX):
    return GroundTruthLabel(frame, box)


def det(conf, frame=0, box=BOX):
    return Detection(frame, box, conf)


def test_match_examples():
    m = match_frame([det(0.9, box=BoundingBox(0, 0, 10, 8))], [lab()])   # IoU 0.8
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)
    m = match_frame([det(0.6), det(0.9)], [lab()])
    assert (m.tp, m.fp, m.fn) == (1, 1, 0)
    assert m.matched_pairs[0][0].confidence == 0.9
    m = match_frame([det(0.9, box=BoundingBox(0, 0, 10, 4))], [lab()])  # IoU 0.4
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)


def test_match_respects_class_and_frames():
    m = match_frame([Detection(0, BOX, 0.9, 1)], [lab()])
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)
    with pytest.raises(ValueError):
        match_frame([det(0.5, 1)], [lab(0)])
    assert match_frame([], [], frame_index=7).frame_index == 7


def test_match_tie_on_confidence_uses_input_order():
    a = det(0.5, box=BoundingBox(0, 0, 10, 9))
    b = det(0.5, box=BoundingBox(0, 0, 10, 10))
    m = match_frame([a, b], [lab()])
    assert m.matched_pairs[0][0] is a


def test_dr_far_examples():
    assert detection_rate(5, 0) == 1.0
    assert detection_rate(0, 7) == 0.0
    assert detection_rate(421, 579) == 0.421
    assert false_alarm_rate(0, 5) == 0.0
    assert false_alarm_rate(0, 0) == 0.0
    assert false_alarm_rate(107, 893) == 0.107
    with pytest.raises(EvaluationDomainError, match="no ground truth"):
        detection_rate(0, 0)


def test_silent_and_perfect_detectors():
    labels = [lab(f) for f in range(10)]
    for s in evaluate_scenario([], labels):
        assert (s.dr, s.far) == (0.0, 0.0)
    perfect = [Detection(l.frame_index, l.box, 1.0) for l in labels]
    for s in evaluate_scenario(perfect, labels):
        assert (s.dr, s.far) == (1.0, 0.0)


def test_no_ground_truth_is_domain_error():
    with pytest.raises(EvaluationDomainError):
        evaluate_scenario([det(0.9)], [])


def test_micro_averaging_sums_counts():
    labels = [lab(0), lab(1), lab(1, BoundingBox(50, 50, 60, 60))]
    dets = [det(0.9, 0), det(0.9, 1, BoundingBox(100, 100, 110, 110))]
    [s] = evaluate_scenario(dets, labels, [0.5])
    assert (s.tp, s.fp, s.fn) == (1, 1, 2)
    assert s.dr == pytest.approx(1 / 3) and s.far == 0.5


def test_random_instances_match_brute_force():
    rng = random.Random(1234)
    for _ in range(20):
        frames = [random_frame(rng, f) for f in range(20)]
        dets = [d for ds, _ in frames for d in ds]
        labels = [l for _, ls in frames for l in ls]
        if not labels:
            continue
        expected = [0, 0, 0]
        for ds, ls in frames:
            for i, v in enumerate(brute_force_counts(ds, ls)):
                expected[i] += v
        [s] = evaluate_scenario(dets, labels, [0.0])
        assert [s.tp, s.fp, s.fn] == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_raising_ct_never_increases_counts(seed):
    rng = random.Random(seed)
    frames = [random_frame(rng, f) for f in range(6)]
    dets = [d for ds, _ in frames for d in ds]
    labels = [l for _, ls in frames for l in ls] or [lab(0)]
    res = evaluate_scenario(dets, labels, [0.0, 0.25, 0.5, 0.75, 0.9, 1.0])
    for lo, hi in zip(res, res[1:]):
        assert hi.tp <= lo.tp and hi.fp <= lo.fp


# --------------------------------------------------------------------------
# aggregation and variation

def sm(value, ct=0.5, condition=SINGLE, sid="s"):
    return ScenarioMetrics(sid, ct, value, value, 0, 0, 0, condition)


def test_aggregate_examples():
    r = aggregate_condition([sm(0.7)])
    assert (r.mean, r.sd, r.n_scenarios) == (0.7, 0.0, 1)
    r = aggregate_condition([sm(0.2), sm(0.4)])
    assert r.mean == pytest.approx(0.3) and r.sd == pytest.approx(0.1)
    r = aggregate_condition([sm(0.849), sm(0.778)])
    assert r.mean == pytest.approx(0.8135, abs=1e-12) and r.sd == pytest.approx(0.0355, abs=1e-12)
    assert aggregate_condition([sm(0.61)] * 5).sd == 0.0
    with pytest.raises(ValueError):
        aggregate_condition([])
    with pytest.raises(ValueError):
        aggregate_condition([sm(0.1, 0.25), sm(0.1, 0.5)])


def test_build_rows_groups_conditions():
    scen = [sm(0.9, sid="a"), sm(0.5, sid="b", condition=MULTIPLE), sm(0.7, sid="c")]
    rows = build_rows(scen)
    by = {r.condition: r for r in rows}
    assert by[COMBINED].n_scenarios == 3 and by[COMBINED].mean == pytest.approx(0.7)
    assert by[SINGLE].mean == pytest.approx(0.8)
    assert by[MULTIPLE].mean == 0.5


def test_variation_examples():
    assert variation(0.712, 0.421) == pytest.approx(69.121, abs=1e-3)
    assert variation(0.712, 0.546) == pytest.approx(30.403, abs=1e-3)
    assert variation(0.5, 0.5) == 0.0
    with pytest.raises(EvaluationDomainError, match="variation undefined"):
        variation(0.5, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 1), st.floats(0.001, 1), st.floats(0.01, 100))
def test_variation_scale_invariant(a, b, k):
    assert variation(a, a) == 0.0
    assert variation(a * k, b * k) == pytest.approx(variation(a, b), rel=1e-9, abs=1e-9)


# --------------------------------------------------------------------------
# reports

def rows(values, cond=COMBINED):
    return [MetricRow(cond, ct, v, 0.01, 1) for ct, v in values]


def test_report_single_row():
    text = render_report(rows([(0.5, 0.712)]), {"LWIR": rows([(0.5, 0.421)])})
    lines = [l for l in text.split("\n") if l]
    assert len(lines) == 3      # title, header, one row
    assert lines[1].split() == ["Condition", "CT", "Ours(mean±sd)", "Baseline(mean±sd)",
                                "Variation%"]
    assert lines[2].split() == ["Combined", "50", "0.712±0.010", "0.421±0.010", "+69.1%"]


def test_report_full_grid_has_12_rows_per_baseline():
    cts = [0.25, 0.5, 0.75, 0.9]
    ours = [MetricRow(c, ct, 0.7, 0.1, 2) for c in (COMBINED, SINGLE, MULTIPLE) for ct in cts]
    base = [MetricRow(c, ct, 0.5, 0.1, 2) for c in (COMBINED, SINGLE, MULTIPLE) for ct in cts]
    text = render_report(ours, {"A": base, "B": base})
    data = [l for l in text.split("\n") if l.startswith(("Combined", "Single", "Multiple"))]
    assert len(data) == 24


def test_report_csv_round_trips():
    ours = rows([(0.25, 0.8), (0.5, 0.712)])
    out = render_report(ours, {"LWIR": rows([(0.25, 0.4), (0.5, 0.421)])}, fmt="csv")
    records = list(csv.DictReader(io.StringIO(out)))
    assert len(records) == 2
    r = records[1]
    assert (r["condition"], float(r["ct"]), float(r["ours_mean"]), float(r["baseline_mean"])) == (
        COMBINED, 0.5, 0.712, 0.421)
    assert float(r["variation_pct"]) == pytest.approx(69.121140, abs=1e-6)


def test_report_missing_cell():
    with pytest.raises(ReportError):
        render_report(rows([(0.5, 0.7), (0.9, 0.6)]), {"LWIR": rows([(0.5, 0.4)])})
    with pytest.raises(ReportError):
        render_report([], {})


def test_report_zero_baseline_prints_na():
    text = render_report(rows([(0.5, 0.1)]), {"B": rows([(0.5, 0.0)])})
    assert text.split("\n")[2].endswith("n/a")


# --------------------------------------------------------------------------
# evaluation config

def test_eval_config_paths_and_replay(tmp_path):
    (tmp_path / "d.txt").write_text("0 0 0 10 10 0.9 0\n")
    (tmp_path / "l.txt").write_text("0 0 0 10 10 0\n")
    cfg = tmp_path / "eval.txt"
    cfg.write_text("# comparison\nmethod ours\ns1 single d.txt l.txt\n"
                   "method base\ns1 single replay 50 0.25 0.1\n")
    ours, base = read_eval_config(cfg)
    assert ours.name == "ours" and ours.scenarios[0].detections_path == tmp_path / "d.txt"
    [m] = evaluate_method(ours, [0.5])
    assert (m.dr, m.far) == (1.0, 0.0)
    [b] = evaluate_method(base, [0.5])
    assert (b.dr, b.far, b.condition) == (0.25, 0.1, SINGLE)
    with pytest.raises(ValueError, match="no replay value"):
        evaluate_method(base, [0.9])


@pytest.mark.parametrize("text,line", [
    ("s1 single d l\n", 1),
    ("method a b\n", 1),
    ("method a\ns1 triple d l\n", 2),
    ("method a\ns1 single d\n", 2),
    ("method a\ns1 single replay 50 x 0.1\n", 2),
    ("method a\ns1 single replay 50 1.5 0.1\n", 2),
    ("method a\ns1 single d l\ns1 single d l\n", 3),
    ("method a\nmethod a\n", 2),
])
def test_eval_config_errors(tmp_path, text, line):
    (tmp_path / "c.txt").write_text(text)
    with pytest.raises(FormatError) as info:
        read_eval_config(tmp_path / "c.txt")
    assert info.value.line == line


def test_eval_config_needs_two_methods(tmp_path):
    (tmp_path / "c.txt").write_text("method a\ns single d l\n")
    with pytest.raises(FormatError, match="at least two"):
        read_eval_config(tmp_path / "c.txt")

"""Detection Rate / False Alarm Rate evaluation.

A detection is a true positive when it claims an unclaimed ground-truth box
of the same class with IoU at or above the threshold. Per scenario, counts
are summed over frames before forming ratios; across scenarios, the
per-scenario ratios are summarized by mean and population SD.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .detector_io import (BoundingBox, Detection, GroundTruthLabel, filter_by_confidence, iou,
                          read_detections, read_labels)
from .errors import EvaluationDomainError, FormatError, ReportError

__all__ = [
    "iou", "MatchResult", "ScenarioMetrics", "MetricRow", "VariationCell",
    "match_frame", "detection_rate", "false_alarm_rate", "evaluate_scenario",
    "aggregate_condition", "build_rows", "variation", "render_report",
    "DEFAULT_CTS", "COMBINED", "SINGLE", "MULTIPLE", "normalize_condition",
    "BoundingBox", "ConservationError", "variation_cell",
    "ScenarioSource", "MethodConfig", "read_eval_config", "evaluate_method",
]

DEFAULT_CTS = (0.25, 0.50, 0.75, 0.90)
COMBINED = "Combined"
SINGLE = "SingleDrone"
MULTIPLE = "MultipleDrones"
CONDITIONS = (COMBINED, SINGLE, MULTIPLE)

_CONDITION_ALIASES = {
    "single": SINGLE, "singledrone": SINGLE,
    "multiple": MULTIPLE, "multipledrones": MULTIPLE, "multi": MULTIPLE,
    "combined": COMBINED,
}


def normalize_condition(name: str) -> str:
    try:
        return _CONDITION_ALIASES[name.replace("_", "").replace("-", "").lower()]
    except KeyError:
        raise ValueError(f"unknown condition {name!r}") from None


@dataclass(frozen=True)
class MatchResult:
    frame_index: int
    tp: int
    fp: int
    fn: int
    matched_pairs: tuple[tuple[Detection, GroundTruthLabel, float], ...] = field(repr=False)


@dataclass(frozen=True)
class ScenarioMetrics:
    scenario_id: str
    ct: float
    dr: float
    far: float
    tp: int
    fp: int
    fn: int
    condition: str = SINGLE


@dataclass(frozen=True)
class MetricRow:
    condition: str
    ct: float
    mean: float
    sd: float
    n_scenarios: int


@dataclass(frozen=True)
class VariationCell:
    ours_mean: float
    baseline_mean: float
    variation_pct: float | None


class ConservationError(AssertionError):
    """Per-frame TP/FP/FN counts do not add up; indicates a matcher bug."""


def match_frame(dets: Sequence[Detection], labels: Sequence[GroundTruthLabel],
                iou_threshold: float = 0.5, frame_index: int | None = None) -> MatchResult:
    """Greedy one-to-one matching on one frame.

    Detections are visited by descending confidence (ties: input order) and
    each claims the unclaimed same-class label of highest IoU (ties: lower
    label index) if that IoU reaches ``iou_threshold``.
    """
    frames = {d.frame_index for d in dets} | {l.frame_index for l in labels}
    if frame_index is not None:
        frames.add(frame_index)
    if len(frames) > 1:
        raise ValueError(f"match_frame got mixed frame indices {sorted(frames)}")
    frame = frames.pop() if frames else 0

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    claimed = [False] * len(labels)
    used = [False] * len(dets)
    matched = []
    for i in order:
        det = dets[i]
        best_j, best_iou = -1, -1.0
        for j, lab in enumerate(labels):
            if claimed[j] or lab.class_id != det.class_id:
                continue
            v = iou(det.box, lab.box)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0 and best_iou >= iou_threshold:
            claimed[best_j] = True
            used[i] = True
            matched.append((det, labels[best_j], best_iou))
    # counted independently so the conservation check below can actually fail
    tp = len(matched)
    fp = used.count(False)
    fn = claimed.count(False)
    if tp + fn != len(labels) or tp + fp != len(dets) or fp < 0 or fn < 0:
        raise ConservationError(f"frame {frame}: tp={tp} fp={fp} fn={fn} "
                                f"labels={len(labels)} dets={len(dets)}")
    return MatchResult(frame, tp, fp, fn, tuple(matched))


def detection_rate(tp: int, fn: int) -> float:
    """TP / (TP + FN)."""
    if tp + fn <= 0:
        raise EvaluationDomainError("undefined: no ground truth")
    return tp / (tp + fn)


def false_alarm_rate(fp: int, tp: int) -> float:
    """FP / (TP + FP); 0 when nothing was detected."""
    if tp + fp == 0:
        return 0.0
    return fp / (tp + fp)


def _group_by_frame(items) -> dict[int, list]:
    out: dict[int, list] = {}
    for it in items:
        out.setdefault(it.frame_index, []).append(it)
    return out


def evaluate_scenario(dets: Sequence[Detection], labels: Sequence[GroundTruthLabel],
                      ct_list: Iterable[float] = DEFAULT_CTS, iou_threshold: float = 0.5,
                      scenario_id: str = "", condition: str = SINGLE) -> list[ScenarioMetrics]:
    condition = normalize_condition(condition)
    labels_by_frame = _group_by_frame(labels)
    out = []
    for ct in ct_list:
        dets_by_frame = _group_by_frame(filter_by_confidence(dets, ct))
        tp = fp = fn = 0
        for frame in sorted(set(labels_by_frame) | set(dets_by_frame)):
            m = match_frame(dets_by_frame.get(frame, []), labels_by_frame.get(frame, []),
                            iou_threshold, frame)
            tp += m.tp
            fp += m.fp
            fn += m.fn
        out.append(ScenarioMetrics(scenario_id, ct, detection_rate(tp, fn),
                                   false_alarm_rate(fp, tp), tp, fp, fn, condition))
    return out


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def aggregate_condition(scenarios: Sequence[ScenarioMetrics], metric: str = "dr",
                        condition: str = COMBINED) -> MetricRow:
    """Mean and population SD of one metric over a group of scenarios at one CT."""
    if not scenarios:
        raise ValueError("cannot aggregate an empty group")
    cts = {s.ct for s in scenarios}
    if len(cts) != 1:
        raise ValueError(f"group mixes confidence thresholds {sorted(cts)}")
    if metric not in ("dr", "far"):
        raise ValueError("metric must be 'dr' or 'far'")
    mean, sd = _mean_sd([getattr(s, metric) for s in scenarios])
    return MetricRow(condition, cts.pop(), mean, sd, len(scenarios))


def build_rows(scenarios: Sequence[ScenarioMetrics], metric: str = "dr") -> list[MetricRow]:
    """Rows for Combined plus every drone-count condition present, per CT."""
    cts = sorted({s.ct for s in scenarios})
    rows = []
    for cond in CONDITIONS:
        for ct in cts:
            group = [s for s in scenarios
                     if s.ct == ct and (cond == COMBINED or s.condition == cond)]
            if group:
                rows.append(aggregate_condition(group, metric, cond))
    return rows


def variation(ours_mean: float, baseline_mean: float) -> float:
    """Relative change of ours versus the baseline, in percent."""
    if not baseline_mean > 0:
        raise EvaluationDomainError("variation undefined: baseline mean must be positive")
    return (ours_mean - baseline_mean) / baseline_mean * 100.0


def variation_cell(ours_mean: float, baseline_mean: float) -> VariationCell:
    pct = variation(ours_mean, baseline_mean) if baseline_mean > 0 else None
    return VariationCell(ours_mean, baseline_mean, pct)


# --------------------------------------------------------------------------
# reports

def _ct_label(ct: float) -> str:
    return f"{ct * 100:g}"


def _pair_rows(ours: Sequence[MetricRow], base: Sequence[MetricRow], name: str):
    base_by_key = {(r.condition, r.ct): r for r in base}
    ours_keys = {(r.condition, r.ct) for r in ours}
    missing = [k for k in ours_keys if k not in base_by_key]
    extra = [k for k in base_by_key if k not in ours_keys]
    if missing or extra:
        raise ReportError(f"baseline {name!r} cells do not match ours: "
                          f"missing {sorted(missing)}, unmatched {sorted(extra)}")
    order = {c: i for i, c in enumerate(CONDITIONS)}
    for r in sorted(ours, key=lambda r: (order.get(r.condition, 99), r.ct)):
        b = base_by_key[(r.condition, r.ct)]
        yield r, b, variation_cell(r.mean, b.mean)


def render_report(ours_rows: Sequence[MetricRow], baselines: Mapping[str, Sequence[MetricRow]],
                  fmt: str = "text", metric: str = "DR", ours_name: str = "LWIR+RGB") -> str:
    """Render a DR or FAR comparison table against each named baseline.

    ``text`` gives one aligned table per baseline; ``csv`` gives one record
    per (condition, CT, baseline) with 6-decimal values.
    """
    if not ours_rows:
        raise ReportError("no rows to report")
    if fmt == "text":
        out = []
        for name, base in baselines.items():
            out.append(f"{metric}: {ours_name} (ours) vs {name}")
            out.append(f"{'Condition':<16}{'CT':>4}  {'Ours(mean±sd)':<17}"
                       f"{'Baseline(mean±sd)':<19}{'Variation%':>10}")
            for r, b, cell in _pair_rows(ours_rows, base, name):
                var = "n/a" if cell.variation_pct is None else f"{cell.variation_pct:+.1f}%"
                out.append(f"{r.condition:<16}{_ct_label(r.ct):>4}  "
                           f"{f'{r.mean:.3f}±{r.sd:.3f}':<17}"
                           f"{f'{b.mean:.3f}±{b.sd:.3f}':<19}{var:>10}")
            out.append("")
        return "\n".join(out)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "condition", "ct", "ours", "ours_mean", "ours_sd",
                         "baseline", "baseline_mean", "baseline_sd", "variation_pct"])
        for name, base in baselines.items():
            for r, b, cell in _pair_rows(ours_rows, base, name):
                var = "" if cell.variation_pct is None else f"{cell.variation_pct:.6f}"
                writer.writerow([metric, r.condition, f"{r.ct:.6f}", ours_name,
                                 f"{r.mean:.6f}", f"{r.sd:.6f}", name,
                                 f"{b.mean:.6f}", f"{b.sd:.6f}", var])
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")



# --------------------------------------------------------------------------
# evaluation config
#
#   method <name>                                   starts a method block; first is "ours"
#   <scenario_id> <condition> <detections> <labels> paths relative to the config file
#   <scenario_id> <condition> replay <ct%> <dr> <far>   injects published per-scenario values

@dataclass
class ScenarioSource:
    scenario_id: str
    condition: str
    detections_path: Path | None = None
    labels_path: Path | None = None
    replay: dict[float, tuple[float, float]] = field(default_factory=dict)


@dataclass
class MethodConfig:
    name: str
    scenarios: list[ScenarioSource] = field(default_factory=list)


def read_eval_config(path) -> list[MethodConfig]:
    path = Path(path)
    base = path.parent
    methods: list[MethodConfig] = []
    text = path.read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if tokens[0] == "method":
            if len(tokens) != 2:
                raise FormatError("expected 'method <name>'", path=path, line=lineno)
            if any(m.name == tokens[1] for m in methods):
                raise FormatError(f"duplicate method {tokens[1]!r}", path=path, line=lineno)
            methods.append(MethodConfig(tokens[1]))
            continue
        if not methods:
            raise FormatError("scenario line before any 'method' line", path=path, line=lineno)
        try:
            condition = normalize_condition(tokens[1]) if len(tokens) > 1 else ""
        except ValueError as exc:
            raise FormatError(str(exc), path=path, line=lineno) from None
        if condition == COMBINED:
            raise FormatError("scenario condition must be single or multiple",
                              path=path, line=lineno)
        scenarios = methods[-1].scenarios
        if len(tokens) == 6 and tokens[2] == "replay":
            try:
                ct, dr, far = float(tokens[3]) / 100.0, float(tokens[4]), float(tokens[5])
            except ValueError:
                raise FormatError("replay values must be numeric", path=path, line=lineno) from None
            if not (0 <= ct <= 1 and 0 <= dr <= 1 and 0 <= far <= 1):
                raise FormatError("replay CT, DR and FAR must lie in range", path=path, line=lineno)
            src = next((s for s in scenarios if s.scenario_id == tokens[0]), None)
            if src is None:
                src = ScenarioSource(tokens[0], condition)
                scenarios.append(src)
            elif src.detections_path is not None or src.condition != condition:
                raise FormatError(f"conflicting entries for scenario {tokens[0]!r}",
                                  path=path, line=lineno)
            src.replay[ct] = (dr, far)
        elif len(tokens) == 4:
            if any(s.scenario_id == tokens[0] for s in scenarios):
                raise FormatError(f"duplicate scenario {tokens[0]!r}", path=path, line=lineno)
            scenarios.append(ScenarioSource(tokens[0], condition, base / tokens[2], base / tokens[3]))
        else:
            raise FormatError("expected 'scenario_id condition detections labels' or "
                              "'scenario_id condition replay ct dr far'", path=path, line=lineno)
    if len(methods) < 2:
        raise FormatError("config needs at least two methods (ours and a baseline)", path=path)
    for m in methods:
        if not m.scenarios:
            raise FormatError(f"method {m.name!r} has no scenarios", path=path)
    return methods


def evaluate_method(method: MethodConfig, cts: Sequence[float] = DEFAULT_CTS,
                    iou_threshold: float = 0.5) -> list[ScenarioMetrics]:
    out: list[ScenarioMetrics] = []
    for src in method.scenarios:
        if src.detections_path is None:
            for ct in cts:
                key = next((k for k in src.replay if math.isclose(k, ct, abs_tol=1e-9)), None)
                if key is None:
                    raise ValueError(f"method {method.name!r}, scenario {src.scenario_id!r}: "
                                     f"no replay value for CT {ct * 100:g}")
                dr, far = src.replay[key]
                out.append(ScenarioMetrics(src.scenario_id, ct, dr, far, 0, 0, 0, src.condition))
            continue
        dets = read_detections(src.detections_path)
        labels = read_labels(src.labels_path)
        try:
            out.extend(evaluate_scenario(dets, labels, cts, iou_threshold,
                                         src.scenario_id, src.condition))
        except EvaluationDomainError as exc:
            raise EvaluationDomainError(
                f"method {method.name!r}, scenario {src.scenario_id!r}: {exc}") from None
    return out

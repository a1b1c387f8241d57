"""Boxes, detections and labels: data model, text formats and the external detector contract.

Detection lines are ``frame_index x_min y_min x_max y_max confidence class_id``;
label lines drop the confidence field. Both formats allow '#' comments.
"""

from __future__ import annotations

import logging
import math
import shlex
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence, TypeVar

from .errors import DetectorError, DetectorTimeoutError, FormatError
from .registration import Homography, apply_homography_points

log = logging.getLogger(__name__)

COORD_LIMIT = 1e6
DRONE = 0


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) and -COORD_LIMIT <= c <= COORD_LIMIT for c in coords):
            raise ValueError(f"box coordinates must be finite and within ±{COORD_LIMIT:g}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"inverted or empty box {coords}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def corners(self) -> list[tuple[float, float]]:
        return [(self.x_min, self.y_min), (self.x_max, self.y_min),
                (self.x_max, self.y_max), (self.x_min, self.y_max)]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    frame_index: int
    box: BoundingBox
    confidence: float
    class_id: int = DRONE

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthLabel:
    frame_index: int
    box: BoundingBox
    class_id: int = DRONE

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")


Boxed = TypeVar("Boxed", Detection, GroundTruthLabel)


# --------------------------------------------------------------------------
# text formats

def _num(v: float) -> str:
    return repr(float(v))


def _parse_records(path, n_fields: int, kind: str):
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != n_fields:
            raise FormatError(f"{kind} line needs {n_fields} fields, found {len(tokens)}",
                              path=path, line=lineno)
        try:
            frame = int(tokens[0])
            class_id = int(tokens[-1])
            nums = [float(t) for t in tokens[1:-1]]
        except ValueError:
            raise FormatError(f"malformed {kind} line {raw.strip()!r}",
                              path=path, line=lineno) from None
        try:
            box = BoundingBox(*nums[:4])
        except ValueError as exc:
            raise FormatError(str(exc), path=path, line=lineno) from None
        if frame < 0:
            raise FormatError("negative frame index", path=path, line=lineno)
        yield lineno, frame, box, nums[4:], class_id


def read_detections(path) -> list[Detection]:
    out = []
    for lineno, frame, box, rest, class_id in _parse_records(path, 7, "detection"):
        conf = rest[0]
        if not 0.0 <= conf <= 1.0:
            raise FormatError(f"confidence {conf} outside [0, 1]", path=path, line=lineno)
        out.append(Detection(frame, box, conf, class_id))
    return out


def format_detections(dets: Iterable[Detection]) -> str:
    lines = ["# frame_index x_min y_min x_max y_max confidence class_id"]
    for d in dets:
        b = d.box
        lines.append(f"{d.frame_index} {_num(b.x_min)} {_num(b.y_min)} {_num(b.x_max)} "
                     f"{_num(b.y_max)} {_num(d.confidence)} {d.class_id}")
    return "\n".join(lines) + "\n"


def write_detections(dets: Iterable[Detection], path) -> None:
    Path(path).write_text(format_detections(dets), encoding="utf-8", newline="\n")


def read_labels(path) -> list[GroundTruthLabel]:
    return [GroundTruthLabel(frame, box, class_id)
            for _, frame, box, _, class_id in _parse_records(path, 6, "label")]


def format_labels(labels: Iterable[GroundTruthLabel]) -> str:
    lines = ["# frame_index x_min y_min x_max y_max class_id"]
    for lab in labels:
        b = lab.box
        lines.append(f"{lab.frame_index} {_num(b.x_min)} {_num(b.y_min)} {_num(b.x_max)} "
                     f"{_num(b.y_max)} {lab.class_id}")
    return "\n".join(lines) + "\n"


def write_labels(labels: Iterable[GroundTruthLabel], path) -> None:
    Path(path).write_text(format_labels(labels), encoding="utf-8", newline="\n")


# --------------------------------------------------------------------------
# transforms over box lists

def filter_by_confidence(dets: Sequence[Detection], ct: float) -> list[Detection]:
    """Keep detections with confidence >= ``ct`` (inclusive), in order."""
    if not 0.0 <= ct <= 1.0:
        raise ValueError(f"confidence threshold {ct} outside [0, 1]")
    return [d for d in dets if d.confidence >= ct]


def map_box(h: Homography, box: BoundingBox, clamp_w: float, clamp_h: float) -> BoundingBox | None:
    """AABB of the four mapped corners, clamped; None if nothing is left."""
    pts = apply_homography_points(h, box.corners())
    x0 = max(0.0, float(pts[:, 0].min()))
    y0 = max(0.0, float(pts[:, 1].min()))
    x1 = min(float(clamp_w), float(pts[:, 0].max()))
    y1 = min(float(clamp_h), float(pts[:, 1].max()))
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox(x0, y0, x1, y1)


def map_boxes(h: Homography, items: Sequence[Boxed], clamp_w: float, clamp_h: float) -> list[Boxed]:
    """Express labels or detections in another geometry; fully clamped boxes are dropped."""
    out = []
    for item in items:
        box = map_box(h, item.box, clamp_w, clamp_h)
        if box is not None:
            out.append(replace(item, box=box))
    return out


def merge_labels(primary: Sequence[GroundTruthLabel], secondary_mapped: Sequence[GroundTruthLabel],
                 dedup_iou: float = 0.5) -> list[GroundTruthLabel]:
    """Union of two label sets in the same geometry.

    A secondary label is dropped when it overlaps a same-frame, same-class
    primary label with IoU >= ``dedup_iou``.
    """
    by_key: dict[tuple[int, int], list[BoundingBox]] = {}
    for lab in primary:
        by_key.setdefault((lab.frame_index, lab.class_id), []).append(lab.box)
    merged = list(primary)
    for lab in secondary_mapped:
        boxes = by_key.get((lab.frame_index, lab.class_id), [])
        if any(iou(lab.box, b) >= dedup_iou for b in boxes):
            continue
        merged.append(lab)
    merged.sort(key=lambda lab: lab.frame_index)
    return merged


def align_labels_to_pairs(pairs, lwir_labels: Sequence[GroundTruthLabel],
                          rgb_labels: Sequence[GroundTruthLabel], h: Homography,
                          rgb_w: int, rgb_h: int, dedup_iou: float = 0.5
                          ) -> list[GroundTruthLabel]:
    """Merged labels for a paired stream, indexed by pair ordinal in RGB geometry.

    RGB labels are primary; LWIR labels are mapped through ``h`` first.
    """
    lwir_by_frame: dict[int, list[GroundTruthLabel]] = {}
    rgb_by_frame: dict[int, list[GroundTruthLabel]] = {}
    for lab in lwir_labels:
        lwir_by_frame.setdefault(lab.frame_index, []).append(lab)
    for lab in rgb_labels:
        rgb_by_frame.setdefault(lab.frame_index, []).append(lab)
    out: list[GroundTruthLabel] = []
    for ordinal, pair in enumerate(pairs):
        prim = [replace(l, frame_index=ordinal) for l in rgb_by_frame.get(pair.rgb_entry.index, [])]
        sec = [replace(l, frame_index=ordinal) for l in lwir_by_frame.get(pair.lwir_entry.index, [])]
        out.extend(merge_labels(prim, map_boxes(h, sec, rgb_w, rgb_h), dedup_iou))
    return out


# --------------------------------------------------------------------------
# external detector

@dataclass(frozen=True)
class DetectorCommand:
    argv_template: tuple[str, ...]
    timeout_s: float = 600.0

    def __post_init__(self):
        object.__setattr__(self, "argv_template", tuple(self.argv_template))
        if not self.argv_template:
            raise ValueError("empty detector command")
        joined = "\x00".join(self.argv_template)
        for ph in ("{manifest}", "{out}"):
            if joined.count(ph) != 1:
                raise ValueError(f"template must contain {ph} exactly once")
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")

    @classmethod
    def from_string(cls, template: str, timeout_s: float = 600.0) -> "DetectorCommand":
        return cls(tuple(shlex.split(template)), timeout_s)

    def render(self, manifest_path, out_path) -> list[str]:
        return [tok.replace("{manifest}", str(manifest_path)).replace("{out}", str(out_path))
                for tok in self.argv_template]


def run_external_detector(cmd: DetectorCommand, manifest_path, out_path) -> list[Detection]:
    """Run a detector process over a manifest and parse the detections it writes.

    Raises ``DetectorError`` on nonzero exit or missing output,
    ``DetectorTimeoutError`` past ``cmd.timeout_s``, and ``FormatError`` if
    the output file is malformed.
    """
    if not Path(manifest_path).is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    out_path = Path(out_path)
    if out_path.exists():
        out_path.unlink()
    argv = cmd.render(manifest_path, out_path)
    log.info("running detector: %s", shlex.join(argv))
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=cmd.timeout_s)
    except subprocess.TimeoutExpired as exc:
        raise DetectorTimeoutError(f"detector timed out after {cmd.timeout_s:g} s") from exc
    except OSError as exc:
        raise DetectorError(f"cannot launch detector: {exc}") from exc
    if proc.returncode != 0:
        raise DetectorError(
            f"detector exited with status {proc.returncode}: {proc.stderr.strip()}",
            returncode=proc.returncode, stderr=proc.stderr)
    if not out_path.is_file():
        raise DetectorError(f"detector produced no output file at {out_path}",
                            returncode=0, stderr=proc.stderr)
    return read_detections(out_path)


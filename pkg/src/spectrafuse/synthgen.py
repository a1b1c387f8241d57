"""Deterministic synthetic LWIR/RGB scenes with per-spectrum ground truth.

Scenes live in RGB pixel geometry. The RGB stream samples the scene on its
own pixel grid; the LWIR stream samples it at the RGB-geometry positions of
LWIR pixel centers (``true_homography`` maps LWIR -> RGB). Entities are
anti-aliased discs. An entity is labeled in a spectrum only when its
intensity differs from the local background model by more than
``LABEL_CONTRAST`` levels.

The module also carries the contrast-blob oracle detector used as the
reference detector plug-in.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .detector_io import (BoundingBox, Detection, GroundTruthLabel, write_detections,
                          write_labels)
from .errors import FormatError
from .imagecore import (ManifestEntry, PixelBuffer, StreamManifest, load_image,
                        read_manifest, save_image, write_manifest)
from .registration import (Correspondence, Homography, apply_homography_points,
                           invert_homography, save_homography, write_correspondences)

log = logging.getLogger(__name__)

BACKGROUNDS = ("sky_gradient", "treeline", "sunrise_glare")
ENTITY_KINDS = ("drone", "lamp", "bird")
LABEL_CONTRAST = 25.0
LABEL_MIN_VISIBLE = 0.9  # fraction of the disc box that must lie inside the frame

LWIR_SKY = (20.0, 40.0)
LWIR_TREELINE = 90.0
RGB_SKY = (150.0, 220.0)
RGB_SKY_TINT = np.array([-8.0, 0.0, 8.0])
RGB_TREELINE = np.array([90.0, 130.0, 90.0])
TREELINE_TEXTURE = 8

DEFAULT_HOMOGRAPHY = Homography([[0.97, 0.004, -4.0],
                                 [-0.003, 1.02, -4.0],
                                 [2e-6, 1e-6, 1.0]])

_ENTITY_DEFAULTS = {
    "drone": (255.0, (120, 120, 120)),
    "lamp": (215.0, (255, 230, 40)),
    "bird": (120.0, (40, 40, 40)),
}


@dataclass(frozen=True)
class Entity:
    kind: str
    waypoints: tuple[tuple[float, float, float], ...]
    radius_px: float
    lwir_intensity: float | None = None
    rgb_color: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise ValueError(f"unknown entity kind {self.kind!r}")
        wps = tuple(tuple(float(v) for v in wp) for wp in self.waypoints)
        if not wps or any(len(wp) != 3 for wp in wps):
            raise ValueError("waypoints must be non-empty (t, x, y) triples")
        if any(b[0] < a[0] for a, b in zip(wps, wps[1:])):
            raise ValueError("waypoints must be sorted by time")
        object.__setattr__(self, "waypoints", wps)
        if not self.radius_px > 0:
            raise ValueError("radius_px must be positive")
        lwir, rgb = _ENTITY_DEFAULTS[self.kind]
        if self.lwir_intensity is None:
            object.__setattr__(self, "lwir_intensity", lwir)
        if self.rgb_color is None:
            object.__setattr__(self, "rgb_color", rgb)
        object.__setattr__(self, "rgb_color", tuple(int(c) for c in self.rgb_color))
        if not 0 <= self.lwir_intensity <= 255 or not all(0 <= c <= 255 for c in self.rgb_color):
            raise ValueError("entity intensities must lie in [0, 255]")

    def position(self, t: float) -> tuple[float, float]:
        wps = self.waypoints
        if t <= wps[0][0]:
            return wps[0][1], wps[0][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(wps, wps[1:]):
            if t <= t1:
                a = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return x0 + a * (x1 - x0), y0 + a * (y1 - y0)
        return wps[-1][1], wps[-1][2]


@dataclass(frozen=True)
class SceneSpec:
    scenario_id: str
    condition: str = "single"
    duration_s: float = 10.0
    lwir_rate_hz: float = 60.0
    rgb_rate_hz: float = 35.0
    lwir_dims: tuple[int, int] = (640, 512)
    rgb_dims: tuple[int, int] = (612, 512)
    true_homography: Homography = DEFAULT_HOMOGRAPHY
    background: str = "sky_gradient"
    entities: tuple[Entity, ...] = ()
    seed: int = 0
    horizon_y: float = 300.0
    sun: tuple[float, float, float] = (380.0, 150.0, 100.0)  # x, y, glare radius

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        if self.background not in BACKGROUNDS:
            raise ValueError(f"unknown background {self.background!r}")
        if self.condition not in ("single", "multiple"):
            raise ValueError("condition must be 'single' or 'multiple'")
        if not (self.lwir_rate_hz > 0 and self.rgb_rate_hz > 0 and self.duration_s >= 0):
            raise ValueError("rates must be positive and duration non-negative")
        if min(*self.lwir_dims, *self.rgb_dims) <= 0:
            raise ValueError("dimensions must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        invert_homography(self.true_homography)


@dataclass(frozen=True)
class RenderedScenario:
    scenario_id: str
    condition: str
    true_homography: Homography
    lwir_manifest: StreamManifest
    rgb_manifest: StreamManifest
    lwir_labels: list[GroundTruthLabel] = field(repr=False)
    rgb_labels: list[GroundTruthLabel] = field(repr=False)
    out_dir: Path | None = None


# --------------------------------------------------------------------------
# builtin scenarios

def builtin_specs() -> dict[str, SceneSpec]:
    """The four desk-scale scenarios: treeline, sunrise, lamps, longrange."""
    drone = "drone"
    return {
        "treeline": SceneSpec(
            "treeline", "single", background="treeline", seed=1101,
            entities=(Entity(drone, ((0, 40, 200), (2.5, 200, 400), (6.5, 400, 410),
                                     (8, 470, 200), (10, 570, 170)), 8.0),)),
        "sunrise": SceneSpec(
            "sunrise", "single", background="sunrise_glare", seed=1102,
            entities=(Entity(drone, ((0, 60, 170), (10, 560, 130)), 8.0),)),
        "lamps": SceneSpec(
            "lamps", "multiple", background="sky_gradient", seed=1103,
            entities=(Entity(drone, ((0, 50, 120), (10, 560, 200)), 7.0),
                      Entity(drone, ((0, 560, 260), (10, 60, 300)), 7.0),
                      Entity("lamp", ((0, 150, 420),), 5.0),
                      Entity("lamp", ((0, 300, 430),), 5.0),
                      Entity("lamp", ((0, 450, 420),), 5.0))),
        "longrange": SceneSpec(
            "longrange", "single", background="sky_gradient", seed=1104,
            entities=(Entity(drone, ((0, 100, 250), (10, 500, 220)), 2.0),)),
    }


# --------------------------------------------------------------------------
# background models, in RGB geometry

def _sky_fraction(y, height):
    return np.clip(np.asarray(y, dtype=float) / height, 0.0, 1.0)


def lwir_background(spec: SceneSpec, x, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    lo, hi = LWIR_SKY
    val = lo + (hi - lo) * _sky_fraction(y, spec.rgb_dims[1])
    if spec.background == "treeline":
        val = np.where(y >= spec.horizon_y, LWIR_TREELINE, val)
    return val


def rgb_background_model(spec: SceneSpec, x, y) -> np.ndarray:
    """Noise-free RGB background (before glare), shape ``y.shape + (3,)``."""
    y = np.asarray(y, dtype=float)
    lo, hi = RGB_SKY
    sky = lo + (hi - lo) * _sky_fraction(y, spec.rgb_dims[1])
    out = sky[..., None] + RGB_SKY_TINT
    if spec.background == "treeline":
        out = np.where((y >= spec.horizon_y)[..., None], RGB_TREELINE, out)
    return out


def glare_strength(spec: SceneSpec, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.background != "sunrise_glare":
        return np.zeros(np.broadcast(x, y).shape)
    sx, sy, radius = spec.sun
    d = np.hypot(x - sx, y - sy)
    return np.clip(1.5 * (1.0 - d / radius), 0.0, 1.0)


def _apply_glare(rgb: np.ndarray, g: np.ndarray) -> np.ndarray:
    return rgb + g[..., None] * (255.0 - rgb)


def _to_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _coverage(d: np.ndarray, radius: float) -> np.ndarray:
    return np.clip(radius + 0.5 - d, 0.0, 1.0)


def frame_timestamps(duration_s: float, rate_hz: float) -> list[int]:
    n = math.floor(duration_s * rate_hz + 1e-9) + 1
    return [round(k * 1_000_000_000 / rate_hz) for k in range(n)]


class _Renderer:
    """Caches static backgrounds and pixel-center geometry for one spec."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.h = spec.true_homography
        self.h_inv = invert_homography(self.h)
        lw, lh = spec.lwir_dims
        rw, rh = spec.rgb_dims

        # RGB-geometry positions of LWIR pixel centers
        ys, xs = np.mgrid[0:lh, 0:lw]
        centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
        q = apply_homography_points(self.h, centers)
        self.lwir_qx = q[:, 0].reshape(lh, lw)
        self.lwir_qy = q[:, 1].reshape(lh, lw)
        self.lwir_bg = lwir_background(spec, self.lwir_qx, self.lwir_qy)
        # local RGB-pixel size in LWIR pixels, for patch margins
        self.lwir_scale = 1.0 / max(1e-6, min(abs(np.linalg.det(self.h.matrix[:2, :2])), 1e6)) ** 0.5

        ys, xs = np.mgrid[0:rh, 0:rw]
        self.rgb_x = xs + 0.5
        self.rgb_y = ys + 0.5
        base = rgb_background_model(spec, self.rgb_x, self.rgb_y)
        if spec.background == "treeline":
            rng = np.random.default_rng([spec.seed, 0x7EE])
            tex = rng.integers(-TREELINE_TEXTURE, TREELINE_TEXTURE + 1, size=(rh, rw))
            band = self.rgb_y >= spec.horizon_y
            base = base + np.where(band, tex, 0)[..., None]
        self.rgb_base = base
        self.glare = glare_strength(spec, self.rgb_x, self.rgb_y)
        self.rgb_bg_u8 = _to_u8(_apply_glare(base, self.glare))
        self.lwir_bg_u8 = _to_u8(self.lwir_bg)

    # ------------------------------------------------------------------
    def _rgb_patch(self, cx, cy, radius):
        rw, rh = self.spec.rgb_dims
        m = radius + 2
        x0, x1 = max(0, int(math.floor(cx - m))), min(rw, int(math.ceil(cx + m)))
        y0, y1 = max(0, int(math.floor(cy - m))), min(rh, int(math.ceil(cy + m)))
        if x0 >= x1 or y0 >= y1:
            return None
        return slice(y0, y1), slice(x0, x1)

    def _lwir_patch(self, cx, cy, radius):
        lw, lh = self.spec.lwir_dims
        try:
            (px, py), = apply_homography_points(self.h_inv, [(cx, cy)])
        except ValueError:
            return None
        m = radius * self.lwir_scale * 1.2 + 3
        x0, x1 = max(0, int(math.floor(px - m))), min(lw, int(math.ceil(px + m)))
        y0, y1 = max(0, int(math.floor(py - m))), min(lh, int(math.ceil(py + m)))
        if x0 >= x1 or y0 >= y1:
            return None
        return slice(y0, y1), slice(x0, x1)

    def render_rgb(self, t: float) -> np.ndarray:
        out = self.rgb_bg_u8.copy()
        work = None
        for ent in self.spec.entities:
            cx, cy = ent.position(t)
            patch = self._rgb_patch(cx, cy, ent.radius_px)
            if patch is None:
                continue
            if work is None:
                work = self.rgb_base.copy()
            d = np.hypot(self.rgb_x[patch] - cx, self.rgb_y[patch] - cy)
            c = _coverage(d, ent.radius_px)[..., None]
            color = np.asarray(ent.rgb_color, dtype=float)
            work[patch] = work[patch] * (1 - c) + c * color
            out[patch] = _to_u8(_apply_glare(work[patch], self.glare[patch]))
        return out

    def render_lwir(self, t: float) -> np.ndarray:
        work = self.lwir_bg.copy()
        touched = False
        for ent in self.spec.entities:
            cx, cy = ent.position(t)
            patch = self._lwir_patch(cx, cy, ent.radius_px)
            if patch is None:
                continue
            d = np.hypot(self.lwir_qx[patch] - cx, self.lwir_qy[patch] - cy)
            c = _coverage(d, ent.radius_px)
            work[patch] = work[patch] * (1 - c) + c * ent.lwir_intensity
            touched = True
        return _to_u8(work) if touched else self.lwir_bg_u8.copy()

    # ------------------------------------------------------------------
    def rgb_label_box(self, ent: Entity, t: float) -> BoundingBox | None:
        cx, cy = ent.position(t)
        r = ent.radius_px
        rw, rh = self.spec.rgb_dims
        full = BoundingBox(cx - r, cy - r, cx + r, cy + r)
        box = _clip_box(full, rw, rh)
        if box is None or box.area < LABEL_MIN_VISIBLE * full.area:
            return None
        g = glare_strength(self.spec, cx, cy)
        bg = _apply_glare(rgb_background_model(self.spec, cx, cy), g).mean()
        fg = _apply_glare(np.asarray(ent.rgb_color, dtype=float), g).mean()
        return box if abs(fg - bg) > LABEL_CONTRAST else None

    def lwir_label_box(self, ent: Entity, t: float) -> BoundingBox | None:
        cx, cy = ent.position(t)
        r = ent.radius_px
        theta = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
        circle = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
        try:
            pts = apply_homography_points(self.h_inv, circle)
        except ValueError:
            return None
        full = BoundingBox(pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
        lw, lh = self.spec.lwir_dims
        box = _clip_box(full, lw, lh)
        if box is None or box.area < LABEL_MIN_VISIBLE * full.area:
            return None
        bg = float(lwir_background(self.spec, cx, cy))
        return box if abs(ent.lwir_intensity - bg) > LABEL_CONTRAST else None

    def visible_anywhere(self, ent: Entity, t: float) -> bool:
        cx, cy = ent.position(t)
        r = ent.radius_px
        rw, rh = self.spec.rgb_dims
        if cx + r > 0 and cx - r < rw and cy + r > 0 and cy - r < rh:
            return True
        try:
            (px, py), = apply_homography_points(self.h_inv, [(cx, cy)])
        except ValueError:
            return False
        lw, lh = self.spec.lwir_dims
        return 0 <= px < lw and 0 <= py < lh


def _clip_box(box: BoundingBox, w: float, h: float) -> BoundingBox | None:
    x0, y0 = max(0.0, box.x_min), max(0.0, box.y_min)
    x1, y1 = min(float(w), box.x_max), min(float(h), box.y_max)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox(x0, y0, x1, y1)


def calibration_correspondences(spec: SceneSpec) -> list[Correspondence]:
    """Exact LWIR->RGB correspondences on a 4x3 grid of LWIR points."""
    lw, lh = spec.lwir_dims
    src = [(lw * fx, lh * fy) for fy in (0.1, 0.5, 0.9) for fx in (0.1, 0.37, 0.63, 0.9)]
    dst = apply_homography_points(spec.true_homography, src)
    return [Correspondence(s, (float(d[0]), float(d[1]))) for s, d in zip(src, dst)]


def generate_scenario(spec: SceneSpec, out_dir) -> RenderedScenario:
    """Render both streams, per-spectrum labels and calibration files into ``out_dir``.

    Layout: ``lwir/`` and ``rgb/`` (frames + ``manifest.txt``),
    ``labels_lwir.txt``, ``labels_rgb.txt``, ``scene.txt``,
    ``true_homography.txt`` and ``correspondences.txt``.
    """
    out_dir = Path(out_dir)
    renderer = _Renderer(spec)
    lwir_ts = frame_timestamps(spec.duration_s, spec.lwir_rate_hz)
    rgb_ts = frame_timestamps(spec.duration_s, spec.rgb_rate_hz)
    all_times = sorted({t / 1e9 for t in lwir_ts + rgb_ts})
    for i, ent in enumerate(spec.entities):
        if not any(renderer.visible_anywhere(ent, t) for t in all_times):
            raise ValueError(f"entity {i} ({ent.kind}) never enters either image")

    (out_dir / "lwir").mkdir(parents=True, exist_ok=True)
    (out_dir / "rgb").mkdir(parents=True, exist_ok=True)
    drones = [e for e in spec.entities if e.kind == "drone"]

    lwir_entries, lwir_labels = [], []
    for k, stamp in enumerate(lwir_ts):
        t = stamp / 1e9
        name = f"lwir_{k:06d}.pgm"
        save_image(PixelBuffer.from_array(renderer.render_lwir(t)), out_dir / "lwir" / name)
        lwir_entries.append(ManifestEntry(k, stamp, name))
        for ent in drones:
            box = renderer.lwir_label_box(ent, t)
            if box is not None:
                lwir_labels.append(GroundTruthLabel(k, box, 0))

    rgb_entries, rgb_labels = [], []
    for k, stamp in enumerate(rgb_ts):
        t = stamp / 1e9
        name = f"rgb_{k:06d}.ppm"
        save_image(PixelBuffer.from_array(renderer.render_rgb(t)), out_dir / "rgb" / name)
        rgb_entries.append(ManifestEntry(k, stamp, name))
        for ent in drones:
            box = renderer.rgb_label_box(ent, t)
            if box is not None:
                rgb_labels.append(GroundTruthLabel(k, box, 0))

    source = spec.scenario_id
    lwir_manifest = StreamManifest(f"{source}-lwir", "LWIR", tuple(lwir_entries), out_dir / "lwir")
    rgb_manifest = StreamManifest(f"{source}-rgb", "RGB", tuple(rgb_entries), out_dir / "rgb")
    write_manifest(lwir_manifest, out_dir / "lwir" / "manifest.txt")
    write_manifest(rgb_manifest, out_dir / "rgb" / "manifest.txt")
    write_labels(lwir_labels, out_dir / "labels_lwir.txt")
    write_labels(rgb_labels, out_dir / "labels_rgb.txt")
    save_scene_spec(spec, out_dir / "scene.txt")
    save_homography(spec.true_homography, out_dir / "true_homography.txt")
    write_correspondences(calibration_correspondences(spec), out_dir / "correspondences.txt")
    log.info("%s: %d LWIR frames, %d RGB frames, %d/%d labels",
             source, len(lwir_entries), len(rgb_entries), len(lwir_labels), len(rgb_labels))
    return RenderedScenario(spec.scenario_id, spec.condition, spec.true_homography,
                            lwir_manifest, rgb_manifest, lwir_labels, rgb_labels, out_dir)


# --------------------------------------------------------------------------
# scene spec text format

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def format_scene_spec(spec: SceneSpec) -> str:
    lines = [
        f"scenario_id = {spec.scenario_id}",
        f"condition = {spec.condition}",
        f"duration_s = {_fmt(float(spec.duration_s))}",
        f"lwir_rate_hz = {_fmt(float(spec.lwir_rate_hz))}",
        f"rgb_rate_hz = {_fmt(float(spec.rgb_rate_hz))}",
        f"lwir_dims = {spec.lwir_dims[0]}x{spec.lwir_dims[1]}",
        f"rgb_dims = {spec.rgb_dims[0]}x{spec.rgb_dims[1]}",
        "true_homography = " + " ".join(f"{v:.17g}" for v in spec.true_homography.matrix.ravel()),
        f"background = {spec.background}",
        f"horizon_y = {_fmt(float(spec.horizon_y))}",
        "sun = " + " ".join(_fmt(float(v)) for v in spec.sun),
        f"seed = {spec.seed}",
    ]
    for i, ent in enumerate(spec.entities):
        lines += [
            f"entity.{i}.kind = {ent.kind}",
            f"entity.{i}.radius_px = {_fmt(float(ent.radius_px))}",
            f"entity.{i}.lwir_intensity = {_fmt(float(ent.lwir_intensity))}",
            f"entity.{i}.rgb_color = " + " ".join(str(c) for c in ent.rgb_color),
            f"entity.{i}.waypoints = " + "; ".join(
                " ".join(_fmt(float(v)) for v in wp) for wp in ent.waypoints),
        ]
    return "\n".join(lines) + "\n"


def save_scene_spec(spec: SceneSpec, path) -> None:
    Path(path).write_text(format_scene_spec(spec), encoding="utf-8", newline="\n")


def _parse_dims(text: str) -> tuple[int, int]:
    w, h = text.lower().split("x")
    return int(w), int(h)


def load_scene_spec(path) -> SceneSpec:
    top: dict[str, tuple[str, int]] = {}
    ents: dict[int, dict[str, tuple[str, int]]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", path=path, line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("entity."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit():
                raise FormatError(f"bad entity key {key!r}", path=path, line=lineno)
            ents.setdefault(int(parts[1]), {})[parts[2]] = (value, lineno)
        else:
            top[key] = (value, lineno)

    def conv(store, key, fn, default=None):
        if key not in store:
            if default is None:
                raise FormatError(f"missing key {key!r}", path=path)
            return default
        value, lineno = store[key]
        try:
            return fn(value)
        except (ValueError, TypeError) as exc:
            raise FormatError(f"bad value for {key!r}: {exc}", path=path, line=lineno) from None

    def floats(v):
        return tuple(float(t) for t in v.split())

    entities = []
    for i in sorted(ents):
        e = ents[i]
        entities.append(Entity(
            conv(e, "kind", str),
            conv(e, "waypoints", lambda v: tuple(floats(w) for w in v.split(";"))),
            conv(e, "radius_px", float),
            conv(e, "lwir_intensity", float) if "lwir_intensity" in e else None,
            conv(e, "rgb_color", lambda v: tuple(int(t) for t in v.split())) if "rgb_color" in e else None,
        ))
    try:
        return SceneSpec(
            scenario_id=conv(top, "scenario_id", str),
            condition=conv(top, "condition", str, "single"),
            duration_s=conv(top, "duration_s", float, 10.0),
            lwir_rate_hz=conv(top, "lwir_rate_hz", float, 60.0),
            rgb_rate_hz=conv(top, "rgb_rate_hz", float, 35.0),
            lwir_dims=conv(top, "lwir_dims", _parse_dims, (640, 512)),
            rgb_dims=conv(top, "rgb_dims", _parse_dims, (612, 512)),
            true_homography=conv(top, "true_homography", lambda v: Homography(floats(v)),
                                 DEFAULT_HOMOGRAPHY),
            background=conv(top, "background", str, "sky_gradient"),
            entities=tuple(entities),
            seed=conv(top, "seed", int, 0),
            horizon_y=conv(top, "horizon_y", float, 300.0),
            sun=conv(top, "sun", floats, (380.0, 150.0, 100.0)),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc), path=path) from None


# --------------------------------------------------------------------------
# oracle detector

ORACLE_MODES = ("hot_blob", "dark_blob", "fused_blob")
HOT_THRESHOLD = 180.0
DARK_CONTRAST = -25.0
BLUR_SIZE = 15
MIN_AREA = 4
YELLOW_MARGIN = 60.0
SURROUND_PX = 3


def oracle_detect_array(image: np.ndarray, mode: str, frame_index: int = 0) -> list[Detection]:
    """Contrast-blob detections on one ``(h, w)`` or ``(h, w, c)`` image."""
    if mode not in ORACLE_MODES:
        raise ValueError(f"unknown oracle mode {mode!r}; expected one of {ORACLE_MODES}")
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    inten = img.mean(axis=2)
    hot = inten >= HOT_THRESHOLD
    dark = None
    if mode != "hot_blob":
        background = ndimage.uniform_filter(inten, size=BLUR_SIZE, mode="nearest")
        dark = (inten - background) <= DARK_CONTRAST
    if mode == "hot_blob":
        mask = hot
    elif mode == "dark_blob":
        mask = dark
    else:
        mask = hot | dark
        if img.shape[2] == 3:
            r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
            mask &= ~((r - b >= YELLOW_MARGIN) & (g - b >= YELLOW_MARGIN))

    labels, n = ndimage.label(mask)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    h, w = inten.shape
    out = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[k] < MIN_AREA:
            continue
        ys, xs = sl
        comp = labels[sl] == k
        vals = inten[sl][comp]
        y0, y1 = max(0, ys.start - SURROUND_PX), min(h, ys.stop + SURROUND_PX)
        x0, x1 = max(0, xs.start - SURROUND_PX), min(w, xs.stop + SURROUND_PX)
        ring = np.ones((y1 - y0, x1 - x0), dtype=bool)
        ring[ys.start - y0:ys.stop - y0, xs.start - x0:xs.stop - x0] = False
        surround = inten[y0:y1, x0:x1][ring]
        ref = float(surround.mean()) if surround.size else float(inten.mean())
        peak = 0.0
        if mode != "dark_blob" and hot[sl][comp].any():
            peak = max(peak, float(vals.max()) - ref)
        if mode != "hot_blob" and dark[sl][comp].any():
            peak = max(peak, ref - float(vals.min()))
        conf = min(1.0, max(0.0, peak / 100.0))
        box = BoundingBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop))
        out.append(Detection(frame_index, box, round(conf, 6), 0))
    return out


def oracle_detect_manifest(manifest: StreamManifest, mode: str) -> list[Detection]:
    dets: list[Detection] = []
    for entry in manifest.entries:
        buf = load_image(manifest.resolve(entry))
        dets.extend(oracle_detect_array(buf.to_array(), mode, entry.index))
    return dets


def oracle_detector(manifest_path, mode: str, out_path) -> list[Detection]:
    """Run the oracle over every frame of a manifest and write the detections file."""
    dets = oracle_detect_manifest(read_manifest(manifest_path), mode)
    write_detections(dets, out_path)
    return dets


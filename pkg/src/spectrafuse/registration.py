"""LWIR-to-RGB projective registration.

Homographies are estimated with the normalized DLT and applied densely by
inverse mapping with bilinear interpolation. Pixel centers sit at
integer + 0.5 in both images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateConfigurationError, FormatError, PointAtInfinityError
from .imagecore import PixelBuffer

_EPS_W = 1e-12
_DEGENERATE_RTOL = 1e-9


class Homography:
    """3x3 projective map, stored with ``m[2, 2] == 1`` whenever possible."""

    __slots__ = ("_m",)

    def __init__(self, m):
        arr = np.array(m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(arr)):
            raise ValueError("homography entries must be finite")
        if abs(arr[2, 2]) > 1e-12:
            arr = arr / arr[2, 2]
        if abs(np.linalg.det(arr)) <= 1e-12:
            raise ValueError("homography is singular")
        arr.flags.writeable = False
        self._m = arr

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1, 0, tx], [0, 1, ty], [0, 0, 1]])

    def __repr__(self):
        rows = ", ".join("(" + ", ".join(f"{v:.6g}" for v in r) + ")" for r in self._m)
        return f"Homography({rows})"

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self._m, other._m)

    def __hash__(self):
        return hash(self._m.tobytes())

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self._m @ other._m)


@dataclass(frozen=True)
class Correspondence:
    src: tuple[float, float]
    dst: tuple[float, float]

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (*self.src, *self.dst)):
            raise ValueError("correspondence coordinates must be finite")


@dataclass(frozen=True)
class WarpResult:
    image: PixelBuffer
    mask: PixelBuffer


# --------------------------------------------------------------------------
# estimation

def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    if mean_dist <= 0:
        raise DegenerateConfigurationError("degenerate configuration: coincident points")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0, -s * centroid[0]],
                     [0, s, -s * centroid[1]],
                     [0, 0, 1.0]])


def _has_collinear_triple(pts: np.ndarray) -> bool:
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-300)
    for i in range(4):
        a, b, c = (pts[j] for j in range(4) if j != i)
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) <= 1e-9 * scale * scale:
            return True
    return False


def _as_point_arrays(correspondences) -> tuple[np.ndarray, np.ndarray]:
    items = list(correspondences)
    src = np.array([c.src for c in items], dtype=float).reshape(-1, 2)
    dst = np.array([c.dst for c in items], dtype=float).reshape(-1, 2)
    return src, dst


def estimate_homography_points(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Normalized DLT on ``(n, 2)`` point arrays; see :func:`estimate_homography`."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (n, 2) arrays")
    n = len(src)
    if n < 4:
        raise ValueError(f"need at least 4 correspondences, got {n}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("correspondence coordinates must be finite")
    if n == 4 and (_has_collinear_triple(src) or _has_collinear_triple(dst)):
        raise DegenerateConfigurationError("degenerate configuration: collinear points")

    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    ones = np.ones((n, 1))
    ps = (np.hstack([src, ones]) @ t_src.T)[:, :2]
    pd = (np.hstack([dst, ones]) @ t_dst.T)[:, :2]

    a = np.zeros((2 * n, 9))
    x, y = ps[:, 0], ps[:, 1]
    u, v = pd[:, 0], pd[:, 1]
    a[0::2, 0:3] = np.column_stack([-x, -y, -np.ones(n)])
    a[0::2, 6:9] = np.column_stack([u * x, u * y, u])
    a[1::2, 3:6] = np.column_stack([-x, -y, -np.ones(n)])
    a[1::2, 6:9] = np.column_stack([v * x, v * y, v])

    _, s, vt = np.linalg.svd(a, full_matrices=True)
    sigma = np.zeros(9)
    sigma[:len(s)] = s
    # a unique solution needs a one-dimensional null space: sigma[7] well above zero
    if sigma[7] <= _DEGENERATE_RTOL * sigma[0]:
        raise DegenerateConfigurationError("degenerate configuration")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    else:
        h = h / np.linalg.norm(h)
    try:
        return Homography(h)
    except ValueError:
        raise DegenerateConfigurationError("degenerate configuration: singular estimate") from None


def estimate_homography(correspondences: Iterable[Correspondence]) -> Homography:
    """Estimate the LWIR->RGB homography from >= 4 point correspondences.

    Both point sets are translated to their centroid and scaled to a mean
    distance of sqrt(2); the solution is the right singular vector of the
    stacked 2n x 9 system with the smallest singular value, denormalized and
    rescaled so that ``m[2, 2] == 1``.

    Raises ``ValueError`` for fewer than 4 correspondences and
    ``DegenerateConfigurationError`` when the system has no unique solution.
    """
    src, dst = _as_point_arrays(correspondences)
    return estimate_homography_points(src, dst)


def reprojection_residuals(h: Homography, correspondences: Sequence[Correspondence]) -> np.ndarray:
    src, dst = _as_point_arrays(correspondences)
    return np.linalg.norm(apply_homography_points(h, src) - dst, axis=1)


# --------------------------------------------------------------------------
# application

def apply_homography_points(h: Homography, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    m = h.matrix
    w = m[2, 0] * pts[:, 0] + m[2, 1] * pts[:, 1] + m[2, 2]
    if np.any(np.abs(w) <= _EPS_W):
        raise PointAtInfinityError("point at infinity")
    x = (m[0, 0] * pts[:, 0] + m[0, 1] * pts[:, 1] + m[0, 2]) / w
    y = (m[1, 0] * pts[:, 0] + m[1, 1] * pts[:, 1] + m[1, 2]) / w
    return np.column_stack([x, y])


def apply_homography(h: Homography, p: tuple[float, float]) -> tuple[float, float]:
    x, y = apply_homography_points(h, [p])[0]
    return float(x), float(y)


def invert_homography(h: Homography) -> Homography:
    m = h.matrix
    if abs(np.linalg.det(m)) <= 1e-12 or np.linalg.cond(m) > 1e15:
        raise ValueError("homography is near-singular")
    return Homography(np.linalg.inv(m))


# --------------------------------------------------------------------------
# dense warping

@dataclass(frozen=True)
class WarpPlan:
    """Precomputed inverse map for one (homography, source dims, target dims).

    Frames of a stream share geometry, so the per-pixel source coordinates,
    neighbor indices and bilinear weights are computed once and reused.
    """

    src_w: int
    src_h: int
    target_w: int
    target_h: int
    valid: np.ndarray
    idx: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    weights: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    @classmethod
    def build(cls, h: Homography, src_w: int, src_h: int,
              target_w: int, target_h: int) -> "WarpPlan":
        inv = invert_homography(h).matrix
        ys, xs = np.mgrid[0:target_h, 0:target_w]
        cx = xs.ravel() + 0.5
        cy = ys.ravel() + 0.5
        w = inv[2, 0] * cx + inv[2, 1] * cy + inv[2, 2]
        ok_w = np.abs(w) > _EPS_W
        w_safe = np.where(ok_w, w, 1.0)
        # continuous source position in pixel-index units (centers at integers)
        fx = (inv[0, 0] * cx + inv[0, 1] * cy + inv[0, 2]) / w_safe - 0.5
        fy = (inv[1, 0] * cx + inv[1, 1] * cy + inv[1, 2]) / w_safe - 0.5
        tol = 1e-9
        valid = ok_w & (fx >= -tol) & (fx <= src_w - 1 + tol) & (fy >= -tol) & (fy <= src_h - 1 + tol)
        fx = np.clip(np.where(valid, fx, 0.0), 0.0, src_w - 1)
        fy = np.clip(np.where(valid, fy, 0.0), 0.0, src_h - 1)
        x0 = np.floor(fx).astype(np.intp)
        y0 = np.floor(fy).astype(np.intp)
        x1 = np.minimum(x0 + 1, src_w - 1)
        y1 = np.minimum(y0 + 1, src_h - 1)
        ax = fx - x0
        ay = fy - y0
        weights = ((1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay)
        idx = (y0 * src_w + x0, y0 * src_w + x1, y1 * src_w + x0, y1 * src_w + x1)
        return cls(src_w, src_h, target_w, target_h, valid, idx, weights)

    def apply(self, src: PixelBuffer) -> WarpResult:
        if (src.width, src.height) != (self.src_w, self.src_h):
            raise ValueError(
                f"source is {src.width}x{src.height}, plan expects {self.src_w}x{self.src_h}")
        planes = src.to_array().reshape(-1, src.channels)
        out = np.empty((self.valid.size, src.channels), dtype=np.uint8)
        for ch in range(src.channels):
            plane = planes[:, ch]
            acc = sum(plane[ix] * wt for ix, wt in zip(self.idx, self.weights))
            # values are non-negative, so half-away-from-zero is floor(v + 0.5)
            vals = np.floor(acc + 0.5)
            vals[~self.valid] = 0
            out[:, ch] = np.clip(vals, 0, 255)
        image = PixelBuffer.from_array(out.reshape(self.target_h, self.target_w, src.channels))
        mask = PixelBuffer.from_array(
            np.where(self.valid, 255, 0).astype(np.uint8).reshape(self.target_h, self.target_w))
        return WarpResult(image, mask)


def warp_to_target(h: Homography, src: PixelBuffer, target_w: int, target_h: int) -> WarpResult:
    """Warp ``src`` (LWIR geometry) into a ``target_w`` x ``target_h`` RGB-geometry raster.

    Target pixels whose inverse-mapped position falls outside the hull of
    source pixel centers get mask 0 and value 0.
    """
    if target_w <= 0 or target_h <= 0:
        raise ValueError("target dimensions must be positive")
    return WarpPlan.build(h, src.width, src.height, target_w, target_h).apply(src)


# --------------------------------------------------------------------------
# text files

def _numeric_tokens(path) -> list[tuple[float, int, int]]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0]
        for col, tok in enumerate(line.split(), start=1):
            try:
                value = float(tok)
            except ValueError:
                raise FormatError(f"non-numeric token {tok!r} (token {col})",
                                  path=path, line=lineno) from None
            if not np.isfinite(value):
                raise FormatError(f"non-finite value {tok!r} (token {col})",
                                  path=path, line=lineno)
            out.append((value, lineno, col))
    return out


def load_homography(path) -> Homography:
    """Read 9 numbers (conventionally 3 lines of 3) as a homography."""
    values = _numeric_tokens(path)
    if len(values) != 9:
        # point at the first surplus value, or at the end of the file
        if len(values) > 9:
            line = values[9][1]
        else:
            line = len(Path(path).read_text(encoding="utf-8").rstrip("\n").split("\n"))
        raise FormatError(f"expected 9 values, found {len(values)}", path=path, line=line)
    try:
        return Homography([v for v, _, _ in values])
    except ValueError as exc:
        raise FormatError(str(exc), path=path, line=values[-1][1]) from None


def format_homography(h: Homography) -> str:
    return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in h.matrix) + "\n"


def save_homography(h: Homography, path) -> None:
    Path(path).write_text(format_homography(h), encoding="utf-8", newline="\n")


def read_correspondences(path) -> list[Correspondence]:
    """Read ``src_x src_y dst_x dst_y`` lines ('#' comments allowed)."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != 4:
            raise FormatError(f"expected 4 values, found {len(tokens)}", path=path, line=lineno)
        try:
            sx, sy, dx, dy = (float(t) for t in tokens)
        except ValueError:
            raise FormatError("non-numeric coordinate", path=path, line=lineno) from None
        try:
            out.append(Correspondence((sx, sy), (dx, dy)))
        except ValueError as exc:
            raise FormatError(str(exc), path=path, line=lineno) from None
    return out


def write_correspondences(correspondences: Iterable[Correspondence], path) -> None:
    lines = ["# src_x src_y dst_x dst_y"]
    lines += [f"{c.src[0]:.17g} {c.src[1]:.17g} {c.dst[0]:.17g} {c.dst[1]:.17g}"
              for c in correspondences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

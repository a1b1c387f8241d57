"""Pixel-level LWIR+RGB fusion by weighted summation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FusionError
from .imagecore import (ManifestEntry, PixelBuffer, StreamManifest, expand_lwir,
                        load_image, save_image, worker_count)
from .registration import Homography, WarpPlan, WarpResult
from .sync import FramePair

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionPolicy:
    alpha: float = 0.5  # weight of the LWIR term
    invalid_fill: str = "rgb-passthrough"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.invalid_fill != "rgb-passthrough":
            raise ValueError("invalid_fill only supports 'rgb-passthrough'")


def blend_arrays(rgb: np.ndarray, lwir3: np.ndarray, valid: np.ndarray, alpha: float) -> np.ndarray:
    """uint8 blend on arrays; ``valid`` is a boolean (h, w) mask."""
    r = rgb.astype(float)
    mixed = r + alpha * (lwir3.astype(float) - r)
    out = np.clip(np.floor(mixed + 0.5), 0, 255).astype(np.uint8)
    return np.where(valid[:, :, None], out, rgb)


def fuse_pixels(rgb: PixelBuffer, lwir3: PixelBuffer, mask: PixelBuffer,
                policy: FusionPolicy = FusionPolicy()) -> PixelBuffer:
    """Blend ``alpha * lwir3 + (1 - alpha) * rgb`` where ``mask`` is 255.

    Rounds half away from zero and clamps to [0, 255]; pixels with mask 0
    keep the RGB value.
    """
    if rgb.channels != 3 or lwir3.channels != 3:
        raise ValueError("rgb and lwir3 must both have 3 channels")
    if mask.channels != 1:
        raise ValueError("mask must have 1 channel")
    dims = {(b.width, b.height) for b in (rgb, lwir3, mask)}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    m = mask.to_array()[:, :, 0]
    if np.any((m != 0) & (m != 255)):
        raise ValueError("mask samples must be 0 or 255")
    out = blend_arrays(rgb.to_array(), lwir3.to_array(), m == 255, policy.alpha)
    return PixelBuffer.from_array(out)


def fused_name(ordinal: int) -> str:
    return f"fused_{ordinal:06d}.ppm"


def fuse_sequence(pairs: list[FramePair], h: Homography, lwir: StreamManifest,
                  rgb: StreamManifest, out_dir, policy: FusionPolicy = FusionPolicy(),
                  lut=None, source_id: str = "fused", workers: int | None = None
                  ) -> StreamManifest:
    """Register and fuse every pair; write one PPM per pair into ``out_dir``.

    Image paths in the returned FUSED manifest are relative to ``out_dir``
    and entry indices are pair ordinals. Nothing is written for an empty
    pair list.
    """
    out_dir = Path(out_dir)
    if not pairs:
        return StreamManifest(source_id, "FUSED", (), out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def load(manifest: StreamManifest, entry: ManifestEntry, pair: FramePair) -> PixelBuffer:
        try:
            return load_image(manifest.resolve(entry))
        except (OSError, ValueError) as exc:
            raise FusionError(
                f"pair at tick {pair.tick_timestamp_ns} (lwir {pair.lwir_entry.index}, "
                f"rgb {pair.rgb_entry.index}): cannot read {manifest.resolve(entry)}: {exc}"
            ) from exc

    first = pairs[0]
    lwir0 = load(lwir, first.lwir_entry, first)
    rgb0 = load(rgb, first.rgb_entry, first)
    plan = WarpPlan.build(h, lwir0.width, lwir0.height, rgb0.width, rgb0.height)

    def work(item: tuple[int, FramePair]) -> ManifestEntry:
        ordinal, pair = item
        lw = load(lwir, pair.lwir_entry, pair)
        rg = load(rgb, pair.rgb_entry, pair)
        if (lw.width, lw.height) != (plan.src_w, plan.src_h):
            raise FusionError(f"pair {ordinal}: LWIR frame is {lw.width}x{lw.height}, "
                              f"stream started at {plan.src_w}x{plan.src_h}")
        if (rg.width, rg.height) != (plan.target_w, plan.target_h):
            raise FusionError(f"pair {ordinal}: RGB frame is {rg.width}x{rg.height}, "
                              f"stream started at {plan.target_w}x{plan.target_h}")
        if rg.channels != 3:
            raise FusionError(f"pair {ordinal}: RGB frame must have 3 channels")
        if lw.channels == 1 and lut is None:
            # gray replication commutes with per-channel resampling
            warped = plan.apply(lw)
            warped = WarpResult(expand_lwir(warped.image), warped.mask)
        else:
            warped = plan.apply(expand_lwir(lw, lut) if lw.channels == 1 else lw)
        fused = fuse_pixels(rg, warped.image, warped.mask, policy)
        name = fused_name(ordinal)
        save_image(fused, out_dir / name)
        return ManifestEntry(ordinal, pair.tick_timestamp_ns, name)

    n_workers = workers or worker_count()
    items = list(enumerate(pairs))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            entries = list(pool.map(work, items))
    else:
        entries = [work(it) for it in items]
    entries.sort(key=lambda e: (e.timestamp_ns, e.index))
    log.info("fused %d pairs into %s", len(entries), out_dir)
    return StreamManifest(source_id, "FUSED", tuple(entries), out_dir)

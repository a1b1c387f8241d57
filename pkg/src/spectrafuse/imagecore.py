"""Raster buffers, binary PGM/PPM I/O, stream manifests and LWIR channel expansion."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Sequence

import numpy as np

from .errors import FormatError

SPECTRA = ("LWIR", "RGB", "FUSED")

_MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}
_WHITESPACE = b" \t\r\n\v\f"


@dataclass(frozen=True)
class PixelBuffer:
    """Row-major, channel-interleaved 8-bit image."""

    width: int
    height: int
    channels: int
    samples: bytes = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"dimensions must be positive, got {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if not isinstance(self.samples, bytes):
            object.__setattr__(self, "samples", bytes(self.samples))
        expected = self.width * self.height * self.channels
        if len(self.samples) != expected:
            raise ValueError(f"expected {expected} samples, got {len(self.samples)}")

    @classmethod
    def from_array(cls, array) -> "PixelBuffer":
        """Build from an ``(h, w)`` or ``(h, w, c)`` array of values in 0..255."""
        arr = np.asarray(array)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("array values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        h, w, c = arr.shape
        return cls(w, h, c, np.ascontiguousarray(arr).tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only ``(h, w, c)`` uint8 view of the samples."""
        return np.frombuffer(self.samples, dtype=np.uint8).reshape(
            self.height, self.width, self.channels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass(frozen=True)
class Frame:
    buffer: PixelBuffer
    timestamp_ns: int
    index: int
    spectrum: str
    source_id: str = ""

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("frame index must be >= 0")
        if self.spectrum not in SPECTRA:
            raise ValueError(f"unknown spectrum {self.spectrum!r}")


@dataclass(frozen=True)
class ManifestEntry:
    index: int
    timestamp_ns: int
    path: str


@dataclass(frozen=True)
class StreamManifest:
    source_id: str
    spectrum: str
    entries: tuple[ManifestEntry, ...] = ()
    # directory that relative entry paths resolve against; not serialized
    base_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.spectrum not in SPECTRA:
            raise ValueError(f"unknown spectrum {self.spectrum!r}")
        object.__setattr__(self, "entries", tuple(self.entries))
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.index <= prev.index:
                raise ValueError(f"entry indices must increase ({prev.index} then {cur.index})")
            if cur.timestamp_ns < prev.timestamp_ns:
                raise ValueError("entry timestamps must be non-decreasing")
        for e in self.entries:
            _check_relative_path(e.path)

    def __len__(self):
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        base = self.base_dir if self.base_dir is not None else Path(".")
        return base / entry.path

    def by_index(self) -> dict[int, ManifestEntry]:
        return {e.index: e for e in self.entries}


def _check_relative_path(path: str) -> None:
    if not path:
        raise ValueError("empty image path")
    p = PurePosixPath(path)
    if p.is_absolute() or path.startswith("\\") or (len(path) > 1 and path[1] == ":"):
        raise ValueError(f"image path must be relative: {path!r}")
    if ".." in p.parts:
        raise ValueError(f"image path may not traverse to a parent: {path!r}")


# --------------------------------------------------------------------------
# PGM / PPM

def _parse_pnm_header(data: bytes, path) -> tuple[int, int, int, int]:
    """Return (width, height, channels, payload_offset)."""
    magic = data[:2]
    if magic not in _MAGIC_CHANNELS:
        raise FormatError(f"unsupported magic {magic!r} (expected P5 or P6)",
                          path=path, offset=0)
    channels = _MAGIC_CHANNELS[magic]
    pos = 2
    values, starts = [], []
    while len(values) < 3:
        # whitespace and comments between header tokens
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token:
            raise FormatError("truncated header", path=path, offset=start)
        if not token.isdigit():
            raise FormatError(f"invalid header token {token!r}", path=path, offset=start)
        values.append(int(token))
        starts.append(start)
    width, height, maxval = values
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError("header must end with a single whitespace byte", path=path, offset=pos)
    if maxval != 255:
        raise FormatError(f"maxval must be 255, got {maxval}", path=path, offset=starts[2])
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid dimensions {width}x{height}", path=path,
                          offset=starts[0] if width <= 0 else starts[1])
    return width, height, channels, pos + 1


def decode_pnm(data: bytes, path=None) -> PixelBuffer:
    width, height, channels, start = _parse_pnm_header(data, path)
    size = width * height * channels
    payload = data[start:start + size]
    if len(payload) < size:
        # offset of the first missing byte
        raise FormatError(
            f"truncated payload: expected {size} bytes, found {len(payload)}",
            path=path, offset=start + len(payload))
    return PixelBuffer(width, height, channels, payload)


def encode_pnm(buffer: PixelBuffer) -> bytes:
    magic = "P5" if buffer.channels == 1 else "P6"
    return f"{magic}\n{buffer.width} {buffer.height}\n255\n".encode("ascii") + buffer.samples


def load_image(path) -> PixelBuffer:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255."""
    data = Path(path).read_bytes()
    return decode_pnm(data, path)


def save_image(buffer: PixelBuffer, path) -> None:
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
    path.write_bytes(encode_pnm(buffer))


# --------------------------------------------------------------------------
# manifests

def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_manifest(text: str, path=None) -> StreamManifest:
    header = None
    entries: list[ManifestEntry] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if header is None:
            fields = dict(tok.split("=", 1) for tok in line.split() if "=" in tok)
            if (len(line.split()) != 2 or set(fields) != {"spectrum", "source"}
                    or fields["spectrum"] not in SPECTRA or not fields["source"]):
                raise FormatError(
                    "expected header 'spectrum=<LWIR|RGB|FUSED> source=<id>'",
                    path=path, line=lineno)
            header = fields
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise FormatError(f"expected 'index timestamp_ns path', got {len(tokens)} fields",
                              path=path, line=lineno)
        try:
            index, stamp = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise FormatError(f"non-integer index or timestamp in {line!r}",
                              path=path, line=lineno) from None
        if index < 0:
            raise FormatError("negative index", path=path, line=lineno)
        try:
            _check_relative_path(tokens[2])
        except ValueError as exc:
            raise FormatError(str(exc), path=path, line=lineno) from None
        if entries:
            prev = entries[-1]
            if index <= prev.index:
                raise FormatError(f"index {index} does not increase (previous {prev.index})",
                                  path=path, line=lineno)
            if stamp < prev.timestamp_ns:
                raise FormatError(
                    f"timestamp {stamp} decreases (previous {prev.timestamp_ns})",
                    path=path, line=lineno)
        entries.append(ManifestEntry(index, stamp, tokens[2]))
    if header is None:
        raise FormatError("missing manifest header", path=path, line=1)
    base = Path(path).parent if path is not None else None
    return StreamManifest(header["source"], header["spectrum"], tuple(entries), base)


def read_manifest(path) -> StreamManifest:
    """Parse a line-based stream manifest.

    The first non-comment line is ``spectrum=<tag> source=<id>``; each
    following line is ``index timestamp_ns relative_path``.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_manifest(text, path)


def format_manifest(manifest: StreamManifest) -> str:
    lines = [f"spectrum={manifest.spectrum} source={manifest.source_id}"]
    lines += [f"{e.index} {e.timestamp_ns} {e.path}" for e in manifest.entries]
    return "\n".join(lines) + "\n"


def write_manifest(manifest: StreamManifest, path) -> None:
    Path(path).write_text(format_manifest(manifest), encoding="utf-8", newline="\n")


def load_frame(manifest: StreamManifest, entry: ManifestEntry) -> Frame:
    buffer = load_image(manifest.resolve(entry))
    return Frame(buffer, entry.timestamp_ns, entry.index, manifest.spectrum, manifest.source_id)


# --------------------------------------------------------------------------
# LWIR expansion

def _as_lut(lut) -> np.ndarray:
    table = np.asarray(lut)
    if table.shape != (256, 3):
        raise ValueError(f"LUT must hold exactly 256 RGB triples, got shape {table.shape}")
    if table.min() < 0 or table.max() > 255:
        raise ValueError("LUT entries must lie in [0, 255]")
    return table.astype(np.uint8)


def expand_lwir(buffer: PixelBuffer, lut: Sequence | np.ndarray | None = None) -> PixelBuffer:
    """Replicate a gray LWIR image to 3 channels, or colorize it through ``lut``."""
    if buffer.channels != 1:
        raise ValueError("expand_lwir expects a 1-channel buffer")
    gray = buffer.to_array()[:, :, 0]
    if lut is None:
        out = np.repeat(gray[:, :, None], 3, axis=2)
    else:
        out = _as_lut(lut)[gray]
    return PixelBuffer.from_array(out)


def load_lut(path) -> np.ndarray:
    """Read a 256-line ``r g b`` colormap file ('#' comments allowed)."""
    rows = []
    last = 0
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 3 or not all(t.isdigit() and int(t) <= 255 for t in tokens):
            raise FormatError("expected three integers in [0, 255]", path=path, line=lineno)
        if len(rows) == 256:
            raise FormatError("more than 256 LUT rows", path=path, line=lineno)
        rows.append([int(t) for t in tokens])
        last = lineno
    if len(rows) != 256:
        # short table: point at the last row read
        raise FormatError(f"expected 256 LUT rows, found {len(rows)}", path=path,
                          line=max(last, 1))
    return np.array(rows, dtype=np.uint8)


def worker_count() -> int:
    """Thread cap from ``SPECTRAFUSE_THREADS`` (0 or unset = auto)."""
    raw = os.environ.get("SPECTRAFUSE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)

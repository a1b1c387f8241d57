"""Pair two timestamped streams onto a common tick grid."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError
from .imagecore import ManifestEntry, StreamManifest

NS_PER_S = 1_000_000_000


@dataclass(frozen=True)
class PairingPolicy:
    target_rate_hz: float = 30.0
    tolerance_ns: int = 16_666_667
    allow_reuse: bool = True

    def __post_init__(self):
        if not self.target_rate_hz > 0:
            raise ValueError("target_rate_hz must be positive")
        if self.tolerance_ns <= 0:
            raise ValueError("tolerance_ns must be positive")
        if self.tolerance_ns > self.period_ns:
            raise ValueError(
                f"tolerance {self.tolerance_ns} ns exceeds the target period {self.period_ns:.0f} ns")

    @property
    def period_ns(self) -> float:
        return NS_PER_S / self.target_rate_hz

    @classmethod
    def for_rate(cls, rate_hz: float, tolerance_ns: int | None = None,
                 allow_reuse: bool = True) -> "PairingPolicy":
        """Policy at ``rate_hz`` with half-period tolerance unless given."""
        if tolerance_ns is None:
            tolerance_ns = round(NS_PER_S / rate_hz / 2)
        return cls(rate_hz, tolerance_ns, allow_reuse)


@dataclass(frozen=True)
class FramePair:
    lwir_entry: ManifestEntry
    rgb_entry: ManifestEntry
    tick_timestamp_ns: int
    skew_ns: int


class _Cursor:
    """Nearest-timestamp lookup over one stream, honoring consumption."""

    def __init__(self, manifest: StreamManifest, allow_reuse: bool):
        self.entries = manifest.entries
        self.stamps = [e.timestamp_ns for e in self.entries]
        self.allow_reuse = allow_reuse
        self.lo = 0

    def nearest(self, tick: int) -> int | None:
        lo = self.lo
        if lo >= len(self.stamps):
            return None
        pos = bisect.bisect_left(self.stamps, tick, lo)
        candidates = [p for p in (pos - 1, pos) if lo <= p < len(self.stamps)]
        best = min(candidates, key=lambda p: (abs(self.stamps[p] - tick), p))
        # earliest entry sharing the winning timestamp
        return bisect.bisect_left(self.stamps, self.stamps[best], lo)

    def consume(self, pos: int) -> None:
        if not self.allow_reuse:
            self.lo = pos + 1


def pair_streams(a: StreamManifest, b: StreamManifest,
                 policy: PairingPolicy = PairingPolicy()) -> list[FramePair]:
    """Pair stream ``a`` (LWIR) with stream ``b`` (RGB) on a tick grid.

    Ticks start at the later of the two first timestamps and run at the
    policy's target rate up to the earlier of the two last timestamps. Each
    tick takes the nearest entry from each stream (ties go to the earlier
    index) and is dropped if either side is farther than the tolerance.
    """
    if not a.entries or not b.entries:
        raise ValueError("cannot pair an empty manifest")
    start = max(a.entries[0].timestamp_ns, b.entries[0].timestamp_ns)
    stop = min(a.entries[-1].timestamp_ns, b.entries[-1].timestamp_ns)
    ca = _Cursor(a, policy.allow_reuse)
    cb = _Cursor(b, policy.allow_reuse)
    pairs: list[FramePair] = []
    k = 0
    while True:
        tick = start + round(k * NS_PER_S / policy.target_rate_hz)
        if tick > stop:
            break
        k += 1
        pa, pb = ca.nearest(tick), cb.nearest(tick)
        if pa is None or pb is None:
            continue
        ea, eb = a.entries[pa], b.entries[pb]
        skew = max(abs(ea.timestamp_ns - tick), abs(eb.timestamp_ns - tick))
        if skew > policy.tolerance_ns:
            continue
        ca.consume(pa)
        cb.consume(pb)
        pairs.append(FramePair(ea, eb, tick, skew))
    return pairs


def format_pairs(pairs: list[FramePair]) -> str:
    lines = ["# tick_ns lwir_index rgb_index skew_ns"]
    lines += [f"{p.tick_timestamp_ns} {p.lwir_entry.index} {p.rgb_entry.index} {p.skew_ns}"
              for p in pairs]
    return "\n".join(lines) + "\n"


def write_pairs(pairs: list[FramePair], path) -> None:
    Path(path).write_text(format_pairs(pairs), encoding="utf-8", newline="\n")


def read_pairs(path, lwir: StreamManifest, rgb: StreamManifest) -> list[FramePair]:
    """Read a pairing file and resolve its indices against the two manifests."""
    lwir_by_index = lwir.by_index()
    rgb_by_index = rgb.by_index()
    pairs: list[FramePair] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != 4:
            raise FormatError(f"expected 4 fields, found {len(tokens)}", path=path, line=lineno)
        try:
            tick, li, ri, skew = (int(t) for t in tokens)
        except ValueError:
            raise FormatError("non-integer field", path=path, line=lineno) from None
        if li not in lwir_by_index:
            raise FormatError(f"LWIR index {li} not in manifest", path=path, line=lineno)
        if ri not in rgb_by_index:
            raise FormatError(f"RGB index {ri} not in manifest", path=path, line=lineno)
        if skew < 0:
            raise FormatError("negative skew", path=path, line=lineno)
        if pairs and tick <= pairs[-1].tick_timestamp_ns:
            raise FormatError("tick timestamps must strictly increase", path=path, line=lineno)
        pairs.append(FramePair(lwir_by_index[li], rgb_by_index[ri], tick, skew))
    return pairs


def paired_manifest(manifest: StreamManifest, pairs: list[FramePair], side: str) -> StreamManifest:
    """One side of a pairing as its own stream: index = pair ordinal, timestamp = tick.

    Paths are unchanged, so the result resolves against the source manifest's
    directory.
    """
    if side not in ("lwir", "rgb"):
        raise ValueError("side must be 'lwir' or 'rgb'")
    entries = []
    for ordinal, pair in enumerate(pairs):
        member = pair.lwir_entry if side == "lwir" else pair.rgb_entry
        entries.append(ManifestEntry(ordinal, pair.tick_timestamp_ns, member.path))
    return StreamManifest(f"{manifest.source_id}-paired", manifest.spectrum,
                          tuple(entries), manifest.base_dir)

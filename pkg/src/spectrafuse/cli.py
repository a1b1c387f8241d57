"""Command-line entry point: ``spectrafuse <subcommand> ...``.

Exit codes: 0 success, 2 input or validation error, 3 external-detector
failure, 4 evaluation-domain error. Logs go to stderr; summaries to stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from .detector_io import (DetectorCommand, align_labels_to_pairs, map_boxes, read_labels,
                          run_external_detector, write_detections, write_labels)
from .errors import DetectorError, EvaluationDomainError, SpectraFuseError
from .fusion import FusionPolicy, fuse_sequence
from .imagecore import load_image, load_lut, read_manifest, write_manifest
from .metrics import DEFAULT_CTS, build_rows, evaluate_method, read_eval_config, render_report
from .registration import (estimate_homography, load_homography, read_correspondences,
                           reprojection_residuals, save_homography)
from .sync import PairingPolicy, pair_streams, paired_manifest, read_pairs, write_pairs
from .synthgen import ORACLE_MODES, builtin_specs, generate_scenario, oracle_detect_manifest

log = logging.getLogger("spectrafuse")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DETECTOR = 3
EXIT_DOMAIN = 4


class InputError(SpectraFuseError):
    """Bad command-line input; maps to exit code 2."""


@dataclass
class RunConfig:
    """Validated view of one invocation."""

    subcommand: str
    inputs: dict[str, Path] = field(default_factory=dict)
    outputs: dict[str, Path] = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    verbosity: int = 0

    def validate(self) -> "RunConfig":
        for role, path in self.inputs.items():
            if not path.exists():
                raise InputError(f"{role} not found: {path}")
        return self


def _parse_cts(text: str) -> tuple[float, ...]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad CT list {text!r}") from None
    if not values or any(not 0 <= v <= 100 for v in values):
        raise argparse.ArgumentTypeError("CT values must be percentages in [0, 100]")
    return tuple(v / 100.0 for v in values)


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return w, h


# --------------------------------------------------------------------------
# subcommands

def cmd_calibrate(cfg: RunConfig) -> int:
    corr = read_correspondences(cfg.inputs["correspondences"])
    if len(corr) < 4:
        raise InputError(f"need at least 4 correspondences, found {len(corr)}")
    h = estimate_homography(corr)
    save_homography(h, cfg.outputs["homography"])
    residual = float(reprojection_residuals(h, corr).max())
    print(f"{len(corr)} correspondences, max residual {residual:.3e} px")
    return EXIT_OK


def cmd_pair(cfg: RunConfig) -> int:
    lwir = read_manifest(cfg.inputs["lwir manifest"])
    rgb = read_manifest(cfg.inputs["rgb manifest"])
    opts = cfg.options
    tol = None if opts["tolerance_ms"] is None else round(opts["tolerance_ms"] * 1e6)
    try:
        policy = PairingPolicy.for_rate(opts["rate"], tol, not opts["no_reuse"])
        pairs = pair_streams(lwir, rgb, policy)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    write_pairs(pairs, cfg.outputs["pairs"])
    max_skew = max((p.skew_ns for p in pairs), default=0)
    print(f"{len(pairs)} pairs, max skew {max_skew} ns")
    if not pairs and opts["require_pairs"]:
        raise InputError("no pairs within tolerance")
    return EXIT_OK


def cmd_fuse(cfg: RunConfig) -> int:
    lwir = read_manifest(cfg.inputs["lwir manifest"])
    rgb = read_manifest(cfg.inputs["rgb manifest"])
    pairs = read_pairs(cfg.inputs["pairs"], lwir, rgb)
    h = load_homography(cfg.inputs["homography"])
    lut = load_lut(cfg.inputs["lut"]) if "lut" in cfg.inputs else None
    try:
        policy = FusionPolicy(cfg.options["alpha"])
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out_dir = cfg.outputs["out_dir"]
    fused = fuse_sequence(pairs, h, lwir, rgb, out_dir, policy, lut=lut)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(fused, out_dir / "manifest.txt")
    print(f"fused {len(fused.entries)} pairs into {out_dir}")
    return EXIT_OK


def cmd_labels(cfg: RunConfig) -> int:
    lwir = read_manifest(cfg.inputs["lwir manifest"])
    rgb = read_manifest(cfg.inputs["rgb manifest"])
    pairs = read_pairs(cfg.inputs["pairs"], lwir, rgb)
    h = load_homography(cfg.inputs["homography"])
    if pairs:
        first = load_image(rgb.resolve(pairs[0].rgb_entry))
        w, hgt = first.width, first.height
    else:
        w = hgt = 1
    merged = align_labels_to_pairs(pairs, read_labels(cfg.inputs["lwir labels"]),
                                   read_labels(cfg.inputs["rgb labels"]), h, w, hgt,
                                   cfg.options["dedup_iou"])
    write_labels(merged, cfg.outputs["labels"])
    print(f"{len(merged)} merged labels over {len(pairs)} pairs")
    return EXIT_OK


def cmd_detect(cfg: RunConfig) -> int:
    opts = cfg.options
    manifest_path = cfg.inputs["manifest"]
    manifest = read_manifest(manifest_path)
    if "pairs" in cfg.inputs:
        other = read_manifest(cfg.inputs["other manifest"])
        lwir, rgb = (manifest, other) if opts["side"] == "lwir" else (other, manifest)
        pairs = read_pairs(cfg.inputs["pairs"], lwir, rgb)
        manifest = paired_manifest(manifest, pairs, opts["side"])

    out = cfg.outputs["detections"]
    if opts["oracle"]:
        dets = oracle_detect_manifest(manifest, opts["oracle"])
    else:
        try:
            cmd = DetectorCommand.from_string(opts["exec"], opts["timeout"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if manifest.entries and "pairs" in cfg.inputs:
            # subset manifest beside the original so relative paths still resolve
            fd, tmp = tempfile.mkstemp(prefix=".paired-", suffix=".txt", dir=manifest_path.parent)
            os.close(fd)
            try:
                write_manifest(manifest, tmp)
                dets = run_external_detector(cmd, tmp, out)
            finally:
                os.unlink(tmp)
        else:
            dets = run_external_detector(cmd, manifest_path, out)
        known = {e.index for e in manifest.entries}
        stray = sorted({d.frame_index for d in dets} - known)
        if stray:
            raise InputError(f"detector output references unknown frames {stray[:5]}")

    if "homography" in cfg.inputs:
        w, hgt = opts["clamp"]
        dets = map_boxes(load_homography(cfg.inputs["homography"]), dets, w, hgt)
    write_detections(dets, out)
    print(f"{len(dets)} detections over {len(manifest.entries)} frames")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    methods = read_eval_config(cfg.inputs["config"])
    for m in methods:
        for src in m.scenarios:
            for p in (src.detections_path, src.labels_path):
                if p is not None and not p.exists():
                    raise InputError(f"method {m.name!r}, scenario {src.scenario_id!r}: "
                                     f"file not found: {p}")
    cts, iou_t = cfg.options["ct"], cfg.options["iou"]
    results = {m.name: evaluate_method(m, cts, iou_t) for m in methods}
    ours = methods[0].name
    text_parts, csv_parts = [], []
    for key, label in (("dr", "DR"), ("far", "FAR")):
        rows = {name: build_rows(res, key) for name, res in results.items()}
        baselines = {name: r for name, r in rows.items() if name != ours}
        text_parts.append(render_report(rows[ours], baselines, "text", label, ours))
        csv = render_report(rows[ours], baselines, "csv", label, ours)
        csv_parts.append(csv if not csv_parts else csv.split("\n", 1)[1])
    prefix = cfg.outputs["prefix"]
    prefix.parent.mkdir(parents=True, exist_ok=True)
    text = "\n".join(text_parts)
    Path(f"{prefix}.txt").write_text(text, encoding="utf-8", newline="\n")
    Path(f"{prefix}.csv").write_text("".join(csv_parts), encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    specs = builtin_specs()
    name = cfg.options["scenario"]
    if name != "all" and name not in specs:
        raise InputError(f"unknown scenario {name!r}; valid: {', '.join(specs)}, all")
    chosen = list(specs.values()) if name == "all" else [specs[name]]
    out = cfg.outputs["out_dir"]
    for spec in chosen:
        overrides = {}
        if cfg.options["seed"] is not None:
            overrides["seed"] = cfg.options["seed"]
        if cfg.options["duration"] is not None:
            overrides["duration_s"] = cfg.options["duration"]
        try:
            spec = replace(spec, **overrides)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        target = out / spec.scenario_id if name == "all" else out
        sc = generate_scenario(spec, target)
        print(f"{spec.scenario_id}: {target}")
        print(f"  lwir/manifest.txt  {len(sc.lwir_manifest.entries)} frames")
        print(f"  rgb/manifest.txt   {len(sc.rgb_manifest.entries)} frames")
        print(f"  labels_lwir.txt    {len(sc.lwir_labels)} labels")
        print(f"  labels_rgb.txt     {len(sc.rgb_labels)} labels")
        print("  scene.txt true_homography.txt correspondences.txt")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spectrafuse",
        description="LWIR+RGB registration, synchronization, fusion and detection evaluation.",
        epilog="Exit codes: 0 ok, 2 input error, 3 detector failure, 4 evaluation-domain error. "
               "SPECTRAFUSE_THREADS caps internal parallelism (0 = auto).")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    s = sub.add_parser("calibrate", help="estimate the LWIR->RGB homography",
                       description="Fit a homography to 'x_lwir y_lwir x_rgb y_rgb' lines "
                                   "(at least 4) and write it as 3 lines of 3 numbers.")
    s.add_argument("correspondences", type=Path)
    s.add_argument("--out", type=Path, required=True, help="homography file to write")

    s = sub.add_parser("pair", help="pair LWIR and RGB manifests on a tick grid",
                       description="Writes 'tick_ns lwir_index rgb_index skew_ns' lines.")
    s.add_argument("lwir_manifest", type=Path)
    s.add_argument("rgb_manifest", type=Path)
    s.add_argument("--out", type=Path, required=True, help="pairing file to write")
    s.add_argument("--rate", type=float, default=30.0, help="tick rate in Hz (default 30)")
    s.add_argument("--tolerance-ms", type=float, default=None,
                   help="max skew per side in ms (default half the tick period)")
    s.add_argument("--no-reuse", action="store_true", help="use each frame in at most one pair")
    s.add_argument("--require-pairs", action="store_true", help="exit 2 if no pairs are found")

    s = sub.add_parser("fuse", help="register and blend paired frames",
                       description="Writes fused_NNNNNN.ppm and manifest.txt into --out-dir.")
    s.add_argument("--pairs", type=Path, required=True)
    s.add_argument("--homography", type=Path, required=True)
    s.add_argument("--lwir-manifest", type=Path, required=True)
    s.add_argument("--rgb-manifest", type=Path, required=True)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--alpha", type=float, default=0.5, help="LWIR weight in [0, 1] (default 0.5)")
    s.add_argument("--lut", type=Path, default=None,
                   help="256-line 'r g b' colormap for LWIR (default grayscale)")

    s = sub.add_parser("labels", help="merge per-spectrum labels onto pair ordinals",
                       description="RGB labels are kept; LWIR labels are mapped into RGB "
                                   "geometry and dropped when they duplicate an RGB label.")
    s.add_argument("--pairs", type=Path, required=True)
    s.add_argument("--homography", type=Path, required=True)
    s.add_argument("--lwir-manifest", type=Path, required=True)
    s.add_argument("--rgb-manifest", type=Path, required=True)
    s.add_argument("--lwir-labels", type=Path, required=True)
    s.add_argument("--rgb-labels", type=Path, required=True)
    s.add_argument("--dedup-iou", type=float, default=0.5)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("detect", help="run the oracle or an external detector over a manifest",
                       description="Detections are 'frame x_min y_min x_max y_max conf class' "
                                   "lines. --exec takes a command template with {manifest} "
                                   "and {out} placeholders.")
    s.add_argument("manifest", type=Path)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--oracle", choices=ORACLE_MODES)
    g.add_argument("--exec", dest="exec_template", metavar="TEMPLATE")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--timeout", type=float, default=600.0, help="external detector timeout, s")
    s.add_argument("--pairs", type=Path, default=None,
                   help="restrict to paired frames; frame index becomes the pair ordinal")
    s.add_argument("--side", choices=("lwir", "rgb"), default=None,
                   help="which side of --pairs MANIFEST is")
    s.add_argument("--other-manifest", type=Path, default=None,
                   help="manifest of the other side of --pairs")
    s.add_argument("--homography", type=Path, default=None,
                   help="map detection boxes through this homography")
    s.add_argument("--clamp", type=_parse_dims, default=None, metavar="WxH",
                   help="clamp mapped boxes to this image size (required with --homography)")

    s = sub.add_parser("eval", help="DR/FAR reports against baselines",
                       description="Config lines: 'method NAME' opens a block (first is ours); "
                                   "'scenario condition detections labels' or "
                                   "'scenario condition replay CT DR FAR'. "
                                   "Writes PREFIX.txt and PREFIX.csv.")
    s.add_argument("config", type=Path)
    s.add_argument("--out", type=Path, required=True, help="report prefix")
    s.add_argument("--ct", type=_parse_cts, default=DEFAULT_CTS,
                   help="comma-separated CT percentages (default 25,50,75,90)")
    s.add_argument("--iou", type=float, default=0.5, help="IoU threshold for a TP (default 0.5)")

    s = sub.add_parser("synth", help="generate a synthetic scenario",
                       description="Writes lwir/, rgb/, labels, scene spec, true homography "
                                   "and calibration correspondences.")
    s.add_argument("--scenario", required=True, help="treeline, sunrise, lamps, longrange or all")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--duration", type=float, default=None, help="override duration in s")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    return p


def _config_from_args(args) -> RunConfig:
    c = RunConfig(args.subcommand, verbosity=args.verbose)
    if args.subcommand == "calibrate":
        c.inputs["correspondences"] = args.correspondences
        c.outputs["homography"] = args.out
    elif args.subcommand == "pair":
        c.inputs.update({"lwir manifest": args.lwir_manifest, "rgb manifest": args.rgb_manifest})
        c.outputs["pairs"] = args.out
        c.options.update(rate=args.rate, tolerance_ms=args.tolerance_ms,
                         no_reuse=args.no_reuse, require_pairs=args.require_pairs)
    elif args.subcommand in ("fuse", "labels"):
        c.inputs.update({"pairs": args.pairs, "homography": args.homography,
                         "lwir manifest": args.lwir_manifest, "rgb manifest": args.rgb_manifest})
        if args.subcommand == "fuse":
            if args.lut is not None:
                c.inputs["lut"] = args.lut
            c.outputs["out_dir"] = args.out_dir
            c.options["alpha"] = args.alpha
        else:
            c.inputs.update({"lwir labels": args.lwir_labels, "rgb labels": args.rgb_labels})
            c.outputs["labels"] = args.out
            c.options["dedup_iou"] = args.dedup_iou
    elif args.subcommand == "detect":
        c.inputs["manifest"] = args.manifest
        c.outputs["detections"] = args.out
        c.options.update(oracle=args.oracle, exec=args.exec_template, timeout=args.timeout,
                         side=args.side, clamp=args.clamp)
        if args.pairs is not None:
            if args.side is None or args.other_manifest is None:
                raise InputError("--pairs needs --side and --other-manifest")
            c.inputs.update({"pairs": args.pairs, "other manifest": args.other_manifest})
        if args.homography is not None:
            if args.clamp is None:
                raise InputError("--homography needs --clamp WxH")
            c.inputs["homography"] = args.homography
    elif args.subcommand == "eval":
        c.inputs["config"] = args.config
        c.outputs["prefix"] = args.out
        c.options.update(ct=args.ct, iou=args.iou)
        if not 0 < args.iou <= 1:
            raise InputError("--iou must lie in (0, 1]")
    elif args.subcommand == "synth":
        c.outputs["out_dir"] = args.out
        c.options.update(scenario=args.scenario, seed=args.seed, duration=args.duration)
    return c.validate()


COMMANDS = {
    "calibrate": cmd_calibrate, "pair": cmd_pair, "fuse": cmd_fuse, "labels": cmd_labels,
    "detect": cmd_detect, "eval": cmd_eval, "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        return COMMANDS[cfg.subcommand](cfg)
    except DetectorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DETECTOR
    except EvaluationDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (SpectraFuseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

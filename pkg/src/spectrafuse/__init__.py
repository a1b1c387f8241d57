"""spectrafuse: LWIR+RGB registration, synchronization, pixel fusion and DR/FAR evaluation."""

from .detector_io import BoundingBox, Detection, DetectorCommand, GroundTruthLabel, iou
from .errors import (DegenerateConfigurationError, DetectorError, DetectorTimeoutError,
                     EvaluationDomainError, FormatError, FusionError, PointAtInfinityError,
                     ReportError, SpectraFuseError)
from .fusion import FusionPolicy, fuse_pixels, fuse_sequence
from .imagecore import ManifestEntry, PixelBuffer, StreamManifest, load_image, read_manifest, save_image
from .metrics import evaluate_scenario, match_frame, variation
from .registration import Homography, estimate_homography, estimate_homography_points, warp_to_target
from .sync import FramePair, PairingPolicy, pair_streams
from .synthgen import SceneSpec, builtin_specs, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "Detection", "DetectorCommand", "GroundTruthLabel", "iou",
    "DegenerateConfigurationError", "DetectorError", "DetectorTimeoutError",
    "EvaluationDomainError", "FormatError", "FusionError", "PointAtInfinityError",
    "ReportError", "SpectraFuseError",
    "FusionPolicy", "fuse_pixels", "fuse_sequence",
    "ManifestEntry", "PixelBuffer", "StreamManifest", "load_image", "read_manifest", "save_image",
    "evaluate_scenario", "match_frame", "variation",
    "Homography", "estimate_homography", "estimate_homography_points", "warp_to_target",
    "FramePair", "PairingPolicy", "pair_streams",
    "SceneSpec", "builtin_specs", "generate_scenario",
    "__version__",
]

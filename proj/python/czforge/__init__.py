"""Construction-zone dataset forge and detection-metric harness."""

from ._core import (
    DataError,
    IoError,
    ParseError,
    ValidationError,
    augment,
    average_precision,
    class_names,
    evaluate,
    iou,
    parse_yolo_label,
    preset_names,
    reference_detector,
    render_scene,
    run_cli,
    serialize_yolo_label,
    stratified_split,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "IoError",
    "ParseError",
    "ValidationError",
    "augment",
    "average_precision",
    "class_names",
    "evaluate",
    "iou",
    "parse_yolo_label",
    "preset_names",
    "reference_detector",
    "render_scene",
    "run_cli",
    "serialize_yolo_label",
    "stratified_split",
]

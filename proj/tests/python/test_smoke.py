import json

import numpy as np
import pytest

import czforge


def test_label_roundtrip():
    text = "0 0.500000 0.500000 0.200000 0.100000\n2 0.100000 0.900000 0.050000 0.050000\n"
    anns = czforge.parse_yolo_label(text)
    assert anns == [(0, 0.5, 0.5, 0.2, 0.1), (2, 0.1, 0.9, 0.05, 0.05)]
    assert czforge.serialize_yolo_label(anns) == text


def test_parse_error_names_line():
    with pytest.raises(czforge.ParseError, match="line 2"):
        czforge.parse_yolo_label("0 0.5 0.5 0.2 0.1\n0 1.5 0.5 0.2 0.1\n")
    assert issubclass(czforge.ParseError, ValueError)


def test_iou():
    assert czforge.iou((0.5, 0.5, 0.2, 0.2), (0.5, 0.5, 0.2, 0.2)) == 1.0
    assert czforge.iou((0.2, 0.2, 0.1, 0.1), (0.8, 0.8, 0.1, 0.1)) == 0.0
    assert czforge.iou((0.25, 0.5, 0.5, 1.0), (0.5, 0.5, 1.0, 1.0)) == pytest.approx(0.5)


def test_average_precision():
    assert czforge.average_precision([(0.9, True), (0.8, True)], 2) == 1.0
    assert czforge.average_precision([(0.9, False)], 1) == 0.0


def test_scene_detect_evaluate():
    image, anns = czforge.render_scene(7, 320, 320)
    assert image.shape == (320, 320, 3) and image.dtype == np.uint8
    preds = czforge.reference_detector(image)
    report = czforge.evaluate({"s": anns}, {"s": preds})
    for name, row in report["per_class"].items():
        if row["instances"]:
            assert row["recall"] == 1.0, name


def test_perfect_predictions():
    gt = {}
    preds = {}
    for seed in range(5):
        _, anns = czforge.render_scene(seed, 256, 256)
        gt[str(seed)] = anns
        preds[str(seed)] = [(c, 1.0, x, y, w, h) for c, x, y, w, h in anns]
    report = czforge.evaluate(gt, preds)
    assert report["map50"] == 1.0 and report["map50_95"] == 1.0


def test_augment_is_deterministic_and_keeps_labels_for_photometric():
    image, anns = czforge.render_scene(3, 128, 128)
    a = czforge.augment(image, anns, "heavy_drift", seed=5, image_id="x")
    b = czforge.augment(image, anns, "heavy_drift", seed=5, image_id="x")
    assert np.array_equal(a[0], b[0])
    assert a[1] == anns
    assert json.loads(a[2])["image_id"] == "x"
    assert "geometric" in czforge.preset_names()
    with pytest.raises(ValueError):
        czforge.augment(image, anns, "no_such_preset_or_pipeline")


def test_split():
    images = [[(0, 0.5, 0.5, 0.1, 0.1)] for _ in range(10)]
    assignment = czforge.stratified_split(images, (0.8, 0.1, 0.1), seed=1)
    assert sorted(assignment) == [0] * 8 + [1, 2]
    with pytest.raises(czforge.ValidationError):
        czforge.stratified_split(images, (0.5, 0.5, 0.5))


def test_cli(tmp_path):
    code, out, _ = czforge.run_cli(["gen", "-n", "3", "--width", "96", "--height", "96", "--out", str(tmp_path / "ds")])
    assert code == 0 and "generated 3 images" in out
    code, out, _ = czforge.run_cli(["stats", "--in", str(tmp_path / "ds")])
    assert code == 0 and out.startswith("Type")
    code, _, err = czforge.run_cli(["stats", "--in", str(tmp_path / "ds"), "--nope"])
    assert code == 1 and "--nope" in err

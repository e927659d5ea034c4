import json
import math

import numpy as np
import pytest

import scavit


def test_generate_synthetic_counts_and_range():
    images, labels = scavit.generate_synthetic(10, image_size=16, seed=3)
    assert images.shape == (10, 16, 16)
    assert labels.sum() == 5
    assert images.min() >= 0.0 and images.max() <= 1.0
    again, _ = scavit.generate_synthetic(10, image_size=16, seed=3)
    assert np.array_equal(images, again)


def test_model_forward_shapes_and_probabilities():
    model = scavit.Model(seed=1)
    assert model.parameter_count == 45506
    images, _ = scavit.generate_synthetic(3, seed=1)
    logits = model.logits(images)
    probs = model.probabilities(images)
    assert logits.shape == (3, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.array_equal(logits, model.logits(images))
    assert "preset" not in model.config and "dim_s = 32" in model.config


def test_bad_inputs_raise():
    with pytest.raises(ValueError, match="dim divisible by heads"):
        scavit.Model("heads = 5\ndim = 256\n")
    model = scavit.Model()
    with pytest.raises(ValueError):
        model.logits(np.zeros((1, 8, 8)))
    with pytest.raises(ValueError):
        scavit.roc_curve(np.array([0.2, 0.3]), np.array([1, 1]))
    with pytest.raises(scavit.CheckpointError):
        scavit.load_checkpoint("/nonexistent/checkpoint.bin")


def test_metrics_match_known_values():
    assert scavit.auc(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1])) == 0.75
    thresholds, fpr, tpr = scavit.roc_curve(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1]))
    assert math.isinf(thresholds[0]) and len(thresholds) == 5
    assert fpr == [0.0, 0.0, 0.5, 0.5, 1.0]
    assert tpr == [0.0, 0.5, 0.5, 1.0, 1.0]
    assert scavit.confusion(np.array([1, 1, 0, 0]), np.array([1, 0, 0, 1])) == {
        "tp": 1, "tn": 1, "fp": 1, "fn": 1}
    assert scavit.percent_2dp(scavit.f1_from(0.9920, 0.9927)) == "99.23"
    report = json.loads(scavit.report(np.array([1, 0]), np.array([1, 0]), np.array([0.9, 0.2])))
    assert report["accuracy"] == 1.0 and report["auc"] == 1.0


def test_drop_probability_linear_schedule():
    assert scavit.drop_probability(3, 6) == 0.5
    assert scavit.drop_probability(6, 6) == 0.0
    assert scavit.drop_probability(2, 6, mode="constant", p=0.05) == 0.05


def test_cli_round_trip(tmp_path):
    data = tmp_path / "data"
    run = tmp_path / "run"
    config = tmp_path / "c.txt"
    config.write_text("preset = desk\nimage_size = 16\ndim = 8\nheads = 2\ndepth = 1\n"
                      "mlp_dim = 16\nepochs = 1\n")
    assert scavit.cli(["gen-data", "--out", str(data), "--n", "20", "--image-size", "16"]) == 0
    assert scavit.cli(["train", "--config", str(config), "--data", str(data),
                       "--out", str(run)]) == 0
    assert scavit.cli(["roc", "--checkpoint", str(run / "checkpoint.bin"), "--data", str(data),
                       "--out", str(run)]) == 0
    metrics = json.loads((run / "metrics.json").read_text())
    assert set(metrics) >= {"accuracy", "recall", "precision", "f1", "auc", "confusion"}
    assert (run / "roc.csv").read_text().startswith("threshold,fpr,tpr\n")
    model = scavit.load_checkpoint(run / "checkpoint.bin")
    images, _ = scavit.generate_synthetic(2, image_size=16)
    assert model.logits(images).shape == (2, 2)
    assert scavit.cli(["no-such-command"]) == 2

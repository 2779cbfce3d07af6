"""End-to-end smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import eagleeye as ee


@pytest.fixture(scope="module")
def blob_setup():
    imgs, labels = ee.synth_blobs(3, 60, 0.25, seed=7)
    spec = ee.build_synthetic_mlp(2, [12], 3)
    ckpt, report = ee.train(
        spec, imgs, labels, {"epochs": 30, "batch": 16, "seed": 7}
    )
    return imgs, labels, ckpt, report


def test_builders_and_counts():
    cnn = ee.build_mnist_cnn(0.25)
    assert cnn.classes == 10
    assert cnn.input_shape == [1, 28, 28]
    mlp = ee.build_synthetic_mlp(2, [16], 2)
    assert mlp.parameter_count() == 82
    with pytest.raises(Exception):
        ee.build_mnist_cnn(0.0)


def test_training_learns_blobs(blob_setup):
    _, labels, ckpt, report = blob_setup
    assert report["epochs"][-1]["accuracy"] >= 0.95
    assert ckpt.classes == 3


def test_classify_and_confidence(blob_setup):
    imgs, labels, ckpt, _ = blob_setup
    cls, probs = ee.classify(ckpt, imgs[0])
    assert probs.shape == (3,)
    assert abs(probs.sum() - 1.0) < 1e-12
    assert 0.0 <= ee.confidence(ckpt, imgs[0]) <= math.sqrt(2.0) + 1e-12
    assert ee.frobenius_radius_bound(ckpt, imgs[0]) >= 0.0


def test_jacobian_rows_sum_to_zero(blob_setup):
    imgs, _, ckpt, _ = blob_setup
    jac = ee.input_jacobian(ckpt, imgs[0])
    assert jac.shape == (3, 2)
    col = jac.sum(axis=0)
    assert np.abs(col).max() <= 1e-10


def test_attack_and_analyze(blob_setup):
    imgs, labels, ckpt, _ = blob_setup
    for i in range(len(labels)):
        if ee.classify(ckpt, imgs[i])[0] == labels[i]:
            break
    res = ee.attack(ckpt, imgs[i], {"kind": "G", "true_label": int(labels[i])})
    assert res["x_adv"].shape == imgs[i].shape
    assert np.all(res["x_adv"] >= -1.0) and np.all(res["x_adv"] <= 1.0)
    if res["success"]:
        assert res["class_after"] != labels[i]

    report = ee.analyze(ckpt, imgs[i], {"seed": 11, "trials": 10}, input_id=i)
    assert report["verdict"] in ("genuine", "suspicious")
    assert 0.0 < report["score"] < 1.0


def test_checkpoint_roundtrip(tmp_path, blob_setup):
    _, _, ckpt, _ = blob_setup
    path = str(tmp_path / "ckpt.json")
    ckpt.save(path)
    back = ee.load_checkpoint(path)
    x = np.array([0.25, -0.5])
    cls_a, probs_a = ee.classify(back, x)
    cls_b, probs_b = ee.classify(ckpt, x)
    assert cls_a == cls_b
    assert np.array_equal(probs_a, probs_b)


def test_digits_and_idx(tmp_path):
    imgs, labels = ee.synth_digits(2, seed=3, split="smoke")
    assert imgs.shape == (20, 1, 28, 28)
    assert imgs.min() >= -1.0 and imgs.max() <= 1.0
    assert sorted(set(labels)) == list(range(10))


def test_precision_recall_counts():
    precision, recall = ee.precision_recall(99, 3, 1, 97)
    assert abs(recall - 0.99) < 1e-12
    assert abs(precision - 99 / 102) < 1e-12
    p, r = ee.precision_recall(0, 0, 0, 10)
    assert p is None and r is None


def test_distill_records_temperature():
    imgs, labels = ee.synth_blobs(2, 40, 0.15, seed=5)
    spec = ee.build_synthetic_mlp(2, [8], 2)
    teacher, student = ee.distill(
        spec, imgs, labels, {"epochs": 10, "batch": 16, "seed": 5, "tau": 40.0}
    )
    assert teacher.temperature == 40.0
    assert student.temperature == 40.0

import json

import numpy as np
import pytest

import autood


def test_vocabulary_shape():
    vocab = autood.vocabularies(1)
    assert [len(v["choices"]) for v in vocab] == [4, 4, 7, 4, 2, 4, 3, 8]
    assert len(autood.vocabularies(3)) == 20


def test_encode_decode_roundtrip():
    tokens = [3, 1, 2, 3, 1, 0, 2, 5]
    spec = json.loads(autood.decode(tokens))
    assert spec["hypothesis"] == "reconstruction"
    assert autood.encode(json.dumps(spec)) == tokens


def test_cardinality():
    assert autood.cardinality(1) == "86016"
    assert autood.cardinality(2) == "462422016"
    assert abs(autood.cardinality_approx(6) - 3.9e23) / 3.9e23 < 0.02


def test_auroc_and_aupr():
    assert autood.auroc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert autood.auroc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert autood.aupr([1.0, 1.0], [1, 0], "out") == pytest.approx(0.5)


def test_distance_identity():
    x = np.random.default_rng(0).random((2, 1, 8, 8))
    for name in ("l1", "l2", "l21", "ssim"):
        assert autood.distance(name, x, x)["scalar"] == pytest.approx(0.0, abs=1e-12)


def test_generators_deterministic():
    a = autood.synth_noise("uniform", 3, [1, 8, 8], seed=5)["samples"]
    b = autood.synth_noise("uniform", 3, [1, 8, 8], seed=5)["samples"]
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    defects = autood.synth_defects(6, [1, 16, 16], seed=2)
    assert len(defects["masks"]) == 6
    assert sum(m.sum() > 0 for m in defects["masks"]) == 3


def test_train_one_and_tiny_search():
    cfg = json.loads(autood.default_config())
    cfg.update(
        {
            "dataset": {"family": "blobs", "n": 200, "shape": [1, 12, 12], "seed": 3},
            "layers_n": 1,
            "epochs": 1,
            "children_per_step": 2,
            "candidates_m": 2,
            "top_k": 1,
            "sil_batch": 1,
            "child_budget_steps": 4,
            "child_batch": 8,
            "hidden": 12,
            "embed": 8,
            "eval_max_samples": 30,
            "seed": 7,
        }
    )
    spec = autood.decode([3, 1, 1, 1, 1, 1, 2, 2])
    result = autood.train_one(spec, json.dumps(cfg))
    assert not result["failed"]
    assert 0.0 <= result["reward"] <= 1.0

    out = autood.run_search(json.dumps(cfg))
    assert len(out["records"]) == 5
    assert out["top5"]
    rnd = autood.run_random_search(json.dumps(cfg))
    assert sum(r["child_train_steps"] for r in rnd["records"]) == sum(
        r["child_train_steps"] for r in out["records"]
    )

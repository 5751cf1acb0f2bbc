import math

import numpy as np
import pytest

import facile


def test_synthetic_hierarchy_shapes():
    x, fine, sup = facile.synthetic_hierarchy(4, 3, 10, 8, seed=1)
    assert x.shape == (120, 8)
    assert len(fine) == 120 and max(fine) == 11
    assert set(sup) == {0, 1, 2, 3}
    x2, _, _ = facile.synthetic_hierarchy(4, 3, 10, 8, seed=1)
    assert np.array_equal(x, x2)


def test_supcon_identical_views():
    v = np.array([[0.6, 0.8]])
    for n in (1, 2, 3):
        z = np.repeat(v, 2 * n, axis=0)
        assert abs(facile.supcon_loss(z, [5] * n) - math.log(2 * n - 1)) < 1e-10


def test_simclr_odd_rows_raise():
    with pytest.raises(facile.DimensionError):
        facile.simclr_loss(np.eye(3))


def test_classifiers_and_metrics():
    support = np.array([[1.0, 0.0], [3.0, 0.0], [-1.0, 0.0], [-3.0, 0.0]])
    labels = [0, 0, 1, 1]
    query = np.array([[0.5, 0.1], [-2.0, 1.0]])
    for kind in ("nc", "lr", "rc"):
        assert facile.fit_predict(kind, support, labels, 2, query) == [0, 1]
    assert facile.macro_f1([0, 1], [0, 1], 2) == 1.0
    assert facile.accuracy([0, 0], [0, 1]) == 0.5
    mean, ci = facile.summarize([0.2, 0.4, 0.6])
    assert mean == pytest.approx(0.4)
    assert ci == pytest.approx(1.96 * 0.2 / math.sqrt(3))
    with pytest.raises(facile.ConfigError):
        facile.fit_predict("svm", support, labels, 2, query)


def test_latent_augmentation_count():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(200, 3))
    x, y = facile.latent_augment(base, base[:4], [0, 1, 2, 3], count=100, prototypes=4)
    assert x.shape == (404, 3)
    assert y[:101] == [0] * 101


def test_risk_fit_planted():
    ns = [10, 20, 40]
    fit = facile.fit_risk_curve(ns, [2.0 / n**0.5 for n in ns])
    assert abs(fit["gamma"] - 0.5) < 1e-12
    assert abs(fit["c"] - 2.0) < 1e-12


def test_pipeline_is_deterministic():
    cfg = {
        "seed": 3,
        "data.num_super": 4,
        "data.fine_per_super": 2,
        "data.per_class": 25,
        "data.dim": 6,
        "coarse.num_sets": 40,
        "pretrain.epochs": 2,
        "encoder.hidden_dims": [8],
        "encoder.embed_dim": 4,
        "aggregator.hidden_dim": 4,
        "eval.tasks": 12,
    }
    a = facile.run_pipeline(cfg)
    assert a == facile.run_pipeline(cfg)
    assert set(a["arms"]) == {"NC", "LR", "RC"}
    assert 0.0 <= a["arms"]["NC"]["mean_f1"] <= 1.0
    with pytest.raises(facile.ConfigError):
        facile.run_pipeline({"pretrain.epoch": 3})

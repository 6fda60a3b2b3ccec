import math

import numpy as np
import pytest

import rcaiunet as rc


def small_config(c1=4, size=32):
    cfg = rc.ModelConfig()
    cfg.base_channels = c1
    cfg.input_size = size
    return cfg


def test_cost_ratio_is_reduced_fraction():
    num, den = rc.separable_cost_ratio(3, 64, 32)
    assert math.gcd(num, den) == 1
    assert num * 576 == den * 73  # 1/64 + 1/9 = 73/576


def test_model_predicts_probabilities():
    net = rc.Model(small_config(), seed=1)
    img = np.random.default_rng(0).random((32, 32))
    prob = net.predict(img)
    assert prob.shape == (32, 32)
    assert np.all((prob >= 0) & (prob <= 1))
    batch = net.predict(img.reshape(1, 1, 32, 32))
    np.testing.assert_array_equal(batch[0, 0], prob)


def test_param_table_sums_to_count():
    net = rc.Model(small_config(), seed=0)
    assert sum(row[2] for row in net.param_table()) == net.param_count()
    assert rc.count_parameters(small_config()) == net.param_count()


def test_save_load_round_trip(tmp_path):
    net = rc.Model(small_config(), seed=2)
    path = str(tmp_path / "m.rcam")
    net.save(path)
    back = rc.Model.load(path)
    img = np.linspace(0, 1, 32 * 32).reshape(32, 32)
    np.testing.assert_array_equal(net.predict(img), back.predict(img))


def test_bad_config_raises():
    with pytest.raises(rc.BadConfig):
        rc.Model(small_config(4, 36))


def test_loss_split_identity():
    rng = np.random.default_rng(1)
    y = (rng.random(64) < 0.4).astype(float)
    p = rng.uniform(0.05, 0.95, 64)
    r = rc.combined_loss(y, p)
    assert abs(r["total"] - 0.5 * (r["bce_mean"] + r["dice"])) < 1e-12


def test_metrics_against_numpy():
    rng = np.random.default_rng(2)
    p = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    g = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    tp, tn, fp, fn = rc.confusion(p, g)
    assert tp == int(np.sum(p & g))
    assert fp == int(np.sum(p & (1 - g)))
    m = rc.evaluate_pair(p, g)
    assert abs(m["DC"] - 2 * tp / (2 * tp + fp + fn)) < 1e-12
    assert abs(rc.mae(p, g) - (fp + fn) / 256) < 1e-12


def test_ahd_worked_example():
    a = np.zeros((5, 5), np.uint8)
    b = np.zeros((5, 5), np.uint8)
    a[0, 0] = 1
    b[3, 4] = 1
    assert rc.ahd(a, b) == pytest.approx(5.0)


def test_postprocess_fills_and_cleans():
    ring = np.zeros((12, 12), np.uint8)
    ring[2:10, 2:10] = 1
    ring[3:9, 3:9] = 0
    assert rc.fill_holes(ring).sum() == 64
    speck = np.zeros((100, 100), np.uint8)
    speck[10:40, 10:40] = 1
    speck[80, 80] = 1
    assert rc.remove_small_regions(speck).sum() == 900
    prob = np.random.default_rng(3).random((32, 32))
    once = rc.refine(prob)
    np.testing.assert_array_equal(rc.refine(once.astype(float)), once)


def test_synthetic_and_png(tmp_path):
    samples = rc.generate_synthetic(2, 48, seed=5)
    assert len(samples) == 2
    sid, img, mask = samples[0]
    assert img.shape == (48, 48) and mask.shape == (48, 48)
    assert 0 < mask.sum() < mask.size
    path = str(tmp_path / "x.png")
    rc.write_png(path, img)
    np.testing.assert_allclose(rc.read_png(path), img, atol=0.5 / 255 + 1e-12)


def test_layer_gradchecks_pass():
    errs = rc.gradcheck_layers(0)
    assert len(errs) == 11
    assert max(errs.values()) < 1e-4

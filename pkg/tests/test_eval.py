import numpy as np
import pytest

from akd.checkpoint import load
from akd.data import generate
from akd.errors import ContractError
from akd.evaluate import (FeatureBank, attention_drift, export_attention,
                          extract_features, knn_classify, l2_normalize,
                          linear_probe, write_pgm)
from akd.vit import ViTConfig, init_params, vit_forward
from akd import data as data_mod


def bank(features, labels, normalize=True):
    features = np.asarray(features, dtype=np.float64)
    if normalize:
        features = l2_normalize(features)
    return FeatureBank(features=features, labels=np.asarray(labels),
                       normalized=normalize)


def gaussian_clusters(rng, n_per, n_classes, dim, spread=0.05):
    centers = rng.normal(0, 1, (n_classes, dim))
    feats, labels = [], []
    for c in range(n_classes):
        feats.append(centers[c] + spread * rng.normal(0, 1, (n_per, dim)))
        labels.append(np.full(n_per, c))
    return np.concatenate(feats), np.concatenate(labels)


# ---------------------------------------------------------------- knn


def test_knn_self_match_k1():
    rng = np.random.default_rng(0)
    feats = rng.normal(0, 1, (40, 8))
    labels = rng.integers(0, 5, 40)
    b = bank(feats, labels)
    assert knn_classify(b, b, k=1) == 1.0


def test_knn_separable_clusters():
    rng = np.random.default_rng(1)
    tr_f, tr_l = gaussian_clusters(rng, 30, 4, 16)
    te_f, te_l = gaussian_clusters(rng, 10, 4, 16)
    # same centers: regenerate test points around the train centers
    acc = knn_classify(bank(tr_f, tr_l), bank(tr_f + 0.01, tr_l), k=5)
    assert acc >= 0.99


def test_knn_shuffled_labels_near_chance():
    rng = np.random.default_rng(2)
    feats = rng.normal(0, 1, (400, 16))
    labels = rng.integers(0, 4, 400)
    q_feats = rng.normal(0, 1, (200, 16))
    q_labels = rng.integers(0, 4, 200)
    acc = knn_classify(bank(feats, labels), bank(q_feats, q_labels), k=20)
    assert abs(acc - 0.25) < 0.12


def test_knn_k_too_large():
    b = bank(np.eye(3), [0, 1, 2])
    with pytest.raises(ContractError):
        knn_classify(b, b, k=4)


def test_knn_scale_invariant_after_normalization():
    rng = np.random.default_rng(3)
    feats = rng.normal(0, 1, (60, 8))
    labels = rng.integers(0, 3, 60)
    q = rng.normal(0, 1, (30, 8))
    ql = rng.integers(0, 3, 30)
    a = knn_classify(bank(feats, labels), bank(q, ql), k=5)
    b = knn_classify(bank(feats * 7.0, labels), bank(q * 0.3, ql), k=5)
    assert a == b


# ---------------------------------------------------------------- probe


def test_linear_probe_separable():
    rng = np.random.default_rng(4)
    f, l = gaussian_clusters(rng, 40, 4, 8, spread=0.02)
    tr = bank(f, l)
    acc = linear_probe(tr, tr, epochs=60, lr=1e-2, seed=0)
    assert acc >= 0.99


def test_linear_probe_zero_features_chance():
    labels = np.arange(80) % 4
    z = FeatureBank(features=np.zeros((80, 8)), labels=labels,
                    normalized=False)
    acc = linear_probe(z, z, epochs=5, lr=1e-2, seed=0)
    assert abs(acc - 0.25) < 0.05


def test_linear_probe_deterministic():
    rng = np.random.default_rng(5)
    f, l = gaussian_clusters(rng, 20, 3, 8)
    tr = bank(f, l)
    a = linear_probe(tr, tr, epochs=10, lr=1e-2, seed=3)
    b = linear_probe(tr, tr, epochs=10, lr=1e-2, seed=3)
    assert a == b


# ---------------------------------------------------------------- features


CFG = ViTConfig(image_size=16, patch_size=4, layers=2, heads=2, head_dim=4)


def test_extract_features_shape_and_determinism():
    rng = np.random.default_rng(6)
    params = init_params(CFG, rng)
    images, labels = generate(seed=0, count=16, size=16)
    b1 = extract_features(params, CFG, images, labels, batch_size=5)
    b2 = extract_features(params, CFG, images, labels, batch_size=16)
    assert b1.features.shape == (16, CFG.embed_dim)
    assert np.allclose(b1.features, b2.features, atol=1e-10)
    assert np.allclose(np.linalg.norm(b1.features, axis=1), 1.0)


# ---------------------------------------------------------------- export


def test_write_pgm(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.0, 0.5], [0.75, 1.0]]))
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert raw[-4:] == bytes([0, 128, 191, 255])


def test_write_pgm_constant_map(tmp_path):
    path = tmp_path / "c.pgm"
    write_pgm(path, np.full((2, 2), 3.0))
    assert path.read_bytes()[-4:] == bytes(4)


def test_export_attention_files_and_invariants(tmp_path):
    rng = np.random.default_rng(7)
    params = init_params(CFG, rng)
    images, _ = generate(seed=1, count=8, size=16)
    raw, diag = export_attention(params, CFG, images[0], tmp_path)
    for h in range(CFG.heads):
        assert (tmp_path / f"head{h}.pgm").exists()
    assert (tmp_path / "aggregated.pgm").exists()
    side = load(tmp_path / "raw_values.akd")
    assert np.array_equal(side["class_rows"], raw["class_rows"])
    # every class-attention row and the fused map are distributions
    assert np.allclose(raw["class_rows"].sum(axis=-1), 1.0)
    assert raw["aggregated"].sum() == pytest.approx(1.0)
    assert diag == {}


def test_export_attention_kl_diagnostic(tmp_path):
    rng = np.random.default_rng(8)
    params = init_params(CFG, rng)
    other = init_params(CFG, np.random.default_rng(9))
    images, _ = generate(seed=2, count=8, size=16)
    _, diag = export_attention(params, CFG, images[0], tmp_path,
                               other=(other, CFG))
    assert diag["kl_to_other"] > 0.0
    _, diag_same = export_attention(params, CFG, images[0], tmp_path,
                                    other=(params, CFG))
    assert diag_same["kl_to_other"] == pytest.approx(0.0, abs=1e-12)


def test_attention_drift_zero_on_self():
    rng = np.random.default_rng(10)
    params = init_params(CFG, rng)
    images, _ = generate(seed=3, count=8, size=16)
    x = data_mod.to_float(images)
    out = vit_forward(x, params, CFG)
    assert attention_drift(out.attention, out.attention) == pytest.approx(
        0.0, abs=1e-12)

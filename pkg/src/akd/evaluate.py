"""Representation-quality evaluation on frozen features.

k-NN with similarity-weighted voting, a linear probe trained with
softmax cross-entropy, attention-map export as PGM heatmaps, and the
attention-drift metric.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import checkpoint, data as data_mod
from . import tensor as T
from .errors import ContractError
from .losses import DistillConfig, ag_loss_record, aggregate_heads
from .optim import AdamWConfig, OptimizerState, adamw_step
from .tensor import Tensor, backward, record_tape
from .train import cross_entropy
from .vit import vit_forward

log = logging.getLogger("akd.eval")


@dataclass
class FeatureBank:
    features: np.ndarray   # (n, D) class tokens, taken before the projector
    labels: np.ndarray
    normalized: bool = False


def l2_normalize(features):
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    return features / np.maximum(norms, 1e-12)


def extract_features(params, cfg, images, labels, batch_size=256,
                     normalize=True):
    """Class-token features in deterministic order, no augmentation."""
    feats = []
    for start in range(0, len(images), batch_size):
        x = data_mod.to_float(images[start:start + batch_size],
                              dtype=np.float64)
        out = vit_forward(x, params, cfg)
        feats.append(out.class_token.data.astype(np.float64))
    features = np.concatenate(feats, axis=0)
    if normalize:
        features = l2_normalize(features)
    return FeatureBank(features=features, labels=np.asarray(labels),
                       normalized=normalize)


def knn_classify(train_bank, query_bank, k=20, tau=0.07):
    """Top-1 accuracy of similarity-weighted k-NN voting.

    Cosine similarity on L2-normalized features; votes weighted by
    exp(similarity / tau).
    """
    if k > len(train_bank.features):
        raise ContractError(
            f"k={k} exceeds train bank size {len(train_bank.features)}")
    train = train_bank.features if train_bank.normalized else \
        l2_normalize(train_bank.features)
    query = query_bank.features if query_bank.normalized else \
        l2_normalize(query_bank.features)
    classes = int(train_bank.labels.max()) + 1
    sims = query @ train.T                       # (nq, nt)
    top = np.argpartition(-sims, k - 1, axis=1)[:, :k]
    rows = np.arange(len(query))[:, None]
    weights = np.exp(sims[rows, top] / tau)
    votes = np.zeros((len(query), classes))
    neighbor_labels = train_bank.labels[top]
    for c in range(classes):
        votes[:, c] = (weights * (neighbor_labels == c)).sum(axis=1)
    pred = votes.argmax(axis=1)
    return float((pred == query_bank.labels).mean())


def linear_probe(train_bank, test_bank, epochs=50, lr=1e-3, batch_size=128,
                 seed=0, weight_decay=0.0):
    """Affine classifier on frozen features; returns test top-1 accuracy."""
    rng = np.random.default_rng(seed)
    x_train = train_bank.features
    d = x_train.shape[1]
    classes = int(max(train_bank.labels.max(), test_bank.labels.max())) + 1
    params = {
        "w": Tensor(rng.normal(0, 0.01, (d, classes)), requires_grad=True),
        "b": Tensor(np.zeros(classes), requires_grad=True),
    }
    opt = OptimizerState(params)
    cfg = AdamWConfig(weight_decay=weight_decay)
    n = len(x_train)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            with record_tape() as tape:
                logits = T.add(T.matmul(Tensor(x_train[idx]), params["w"]),
                               params["b"])
                loss = cross_entropy(logits, train_bank.labels[idx])
                for p in params.values():
                    p.zero_grad()
                backward(loss, tape)
            adamw_step(params, opt, lr, cfg)
    logits = test_bank.features @ params["w"].data + params["b"].data
    return float((logits.argmax(axis=1) == test_bank.labels).mean())


def attention_drift(teacher_rec, student_rec, cfg=None):
    """Shape-adapted KL between two attention records, as a pure metric."""
    cfg = cfg or DistillConfig()
    return float(ag_loss_record(teacher_rec, student_rec, cfg).item())


def write_pgm(path, values):
    """8-bit binary PGM (P5), min-max scaled per map."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    scaled = np.zeros_like(values) if hi <= lo else (values - lo) / (hi - lo)
    pixels = (scaled * 255).round().astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def export_attention(params, cfg, image, out_dir, layer=-1, distill_cfg=None,
                     other=None):
    """Write per-head class-attention heatmaps plus the aggregated map.

    Heatmaps are nearest-neighbor upsampled to image size so every pixel
    is an exact attention value; raw vectors go to a sidecar file in the
    named-tensor format. When `other` (another (params, cfg) pair) is
    given, the per-map KL distances between the two models' aggregated
    and per-head maps are returned as diagnostics.
    """
    distill_cfg = distill_cfg or DistillConfig()
    out_dir.mkdir(parents=True, exist_ok=True)
    x = data_mod.to_float(np.asarray(image)[None], dtype=np.float64)
    out = vit_forward(x, params, cfg)
    rows = out.attention.class_rows[layer].data[0]   # (H, N+1)
    g = cfg.image_size // cfg.patch_size
    scale = cfg.patch_size
    raw = {"class_rows": rows}
    for h in range(rows.shape[0]):
        field = rows[h, 1:].reshape(g, g)
        up = np.repeat(np.repeat(field, scale, axis=0), scale, axis=1)
        write_pgm(out_dir / f"head{h}.pgm", up)
    agg = aggregate_heads(Tensor(rows), distill_cfg.temperature,
                          distill_cfg.log_floor).data
    raw["aggregated"] = agg
    field = agg[1:].reshape(g, g)
    write_pgm(out_dir / "aggregated.pgm",
              np.repeat(np.repeat(field, scale, axis=0), scale, axis=1))
    checkpoint.save(out_dir / "raw_values.akd", raw)
    diagnostics = {}
    if other is not None:
        o_params, o_cfg = other
        o_out = vit_forward(x, o_params, o_cfg)
        diagnostics["kl_to_other"] = attention_drift(
            out.attention, o_out.attention, distill_cfg)
    return raw, diagnostics

"""Command-line interface.

Heavy imports happen inside each command so that --threads can cap the
BLAS pools before numpy is loaded. AKD_LOG selects the log level
(error | info | debug).
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("AKD_LOG", "error"),
                                         logging.ERROR)
    logging.basicConfig(level=level, format="%(name)s: %(message)s")


def _apply_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_config(path):
    from .config import load_run_config
    return load_run_config(path)


def _load_model(path):
    """Checkpoint -> (params, vit config); ignores projector/head/meta."""
    from . import checkpoint
    from .tensor import Tensor
    from .vit import config_from_meta
    tensors = checkpoint.load(path)
    cfg = config_from_meta(tensors)
    params = {k: Tensor(v) for k, v in tensors.items()
              if not k.startswith(("meta.", "projector.", "head."))}
    return params, cfg


def _read_split(data_dir, split):
    from . import data as data_mod
    return data_mod.read_raw(Path(data_dir) / f"{split}.bin")


def cmd_gen_data(args):
    from . import data as data_mod
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = data_mod.generate(args.seed, args.count)
    val = data_mod.generate(args.seed + 1, args.val_count)
    data_mod.write_raw(out / "train.bin", *train)
    data_mod.write_raw(out / "val.bin", *val)
    print(json.dumps({"train": args.count, "val": args.val_count,
                      "out": str(out)}))
    return 0


def cmd_make_teacher(args):
    import numpy as np
    from . import checkpoint
    from .train import train_supervised, classify_accuracy
    from .vit import init_params, config_meta
    cfg = _load_config(args.config)
    t_cfg = cfg.vit_teacher
    images, labels = _read_split(args.data, "train")
    val = _read_split(args.data, "val")
    rng = np.random.default_rng(args.seed)
    params = init_params(t_cfg, rng, dtype=np.float32, trainable=True)
    head, history = train_supervised(
        params, t_cfg, images, labels, n_classes=int(labels.max()) + 1,
        epochs=args.epochs, lr=args.lr, batch_size=cfg.train.batch_size,
        seed=args.seed, weight_decay=cfg.train.weight_decay, val=val)
    val_acc = classify_accuracy(params, t_cfg, head, *val)
    tensors = {k: p.data for k, p in {**params, **head}.items()}
    for k, v in config_meta(t_cfg).items():
        tensors[f"meta.{k}"] = np.asarray(float(v))
    tensors["meta.val_acc"] = np.asarray(val_acc)
    checkpoint.save(args.out, tensors)
    print(json.dumps({"val_acc": val_acc, "epochs": args.epochs,
                      "out": str(args.out)}))
    return 0


def cmd_distill(args):
    import numpy as np
    from . import checkpoint
    from .losses import Projector
    from .train import run_distillation
    from .vit import init_params, config_meta
    cfg = _load_config(args.config)
    t_params, t_cfg = _load_model(args.teacher)
    for p in t_params.values():
        p.requires_grad = False
    images, _ = _read_split(args.data, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.train.seed)
    s_params = init_params(cfg.vit_student, rng, dtype=np.float32,
                           trainable=True)
    projector = Projector(cfg.vit_student.embed_dim, t_cfg.embed_dim,
                          depth=cfg.projector_depth, rng=rng,
                          dtype=np.float32)
    metrics = run_distillation(
        (t_params, t_cfg), (s_params, cfg.vit_student), projector, images,
        cfg.train, cfg.distill, out_dir=out,
        metrics_path=out / "metrics.jsonl")
    # re-save the final checkpoint with config metadata attached
    tensors = {k: p.data for k, p in s_params.items()}
    tensors.update({k: p.data for k, p in projector.param_dict().items()})
    for k, v in config_meta(cfg.vit_student).items():
        tensors[f"meta.{k}"] = np.asarray(float(v))
    checkpoint.save(out / "student_final.akd", tensors)
    print(json.dumps({"epochs": len(metrics),
                      "final_loss": metrics[-1]["loss_total"],
                      "out": str(out)}))
    return 0


def cmd_eval_knn(args):
    from .evaluate import extract_features, knn_classify
    params, cfg = _load_model(args.ckpt)
    train = _read_split(args.data, "train")
    val = _read_split(args.data, "val")
    train_bank = extract_features(params, cfg, *train)
    val_bank = extract_features(params, cfg, *val)
    acc = knn_classify(train_bank, val_bank, k=args.k, tau=args.tau)
    print(json.dumps({"metric": "knn_top1", "k": args.k, "tau": args.tau,
                      "accuracy": acc}))
    return 0


def cmd_eval_linear(args):
    from .evaluate import extract_features, linear_probe
    params, cfg = _load_model(args.ckpt)
    train = _read_split(args.data, "train")
    val = _read_split(args.data, "val")
    train_bank = extract_features(params, cfg, *train)
    val_bank = extract_features(params, cfg, *val)
    acc = linear_probe(train_bank, val_bank, epochs=args.epochs, lr=args.lr,
                       seed=args.seed)
    print(json.dumps({"metric": "linear_probe_top1", "epochs": args.epochs,
                      "accuracy": acc}))
    return 0


def cmd_grad_check(args):
    from .gradsuite import run_suite
    seeds = tuple(args.seed + i for i in range(3))
    results = run_suite(seeds=seeds, verbose=print)
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_export_attn(args):
    from . import data as data_mod
    from .evaluate import export_attention
    params, cfg = _load_model(args.ckpt)
    images, _ = _read_split(args.data, "val")
    out = Path(args.out)
    other = None
    if args.other:
        other = _load_model(args.other)
    raw, diag = export_attention(params, cfg, images[args.index], out,
                                 other=other)
    print(json.dumps({"out": str(out), "heads": int(raw["class_rows"].shape[0]),
                      **diag}))
    return 0


def cmd_ablate(args):
    from .ablation import run_ablation
    cfg = _load_config(args.config)
    teacher = _load_model(args.teacher)
    for p in teacher[0].values():
        p.requires_grad = False
    rows = run_ablation(cfg, args.axis, teacher, Path(args.data),
                        Path(args.out), epochs=args.epochs, seed=args.seed)
    print(json.dumps({"axis": args.axis, "rows": len(rows),
                      "out": str(args.out)}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="akd",
        description="Self-supervised ViT knowledge distillation toolkit")
    parser.add_argument("--threads", type=int, default=1,
                        help="cap worker/BLAS threads (1 = reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic train/val splits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--val-count", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("make-teacher", help="supervised teacher pretraining")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--lr", type=float, default=3e-3)
    p.set_defaults(fn=cmd_make_teacher)

    p = sub.add_parser("distill", help="run teacher->student distillation")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("eval-knn", help="k-NN accuracy of frozen features")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--tau", type=float, default=0.07)
    p.set_defaults(fn=cmd_eval_knn)

    p = sub.add_parser("eval-linear", help="linear-probe accuracy")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval_linear)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("export-attn", help="write attention heatmaps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--other", help="second checkpoint for KL diagnostics")
    p.set_defaults(fn=cmd_export_attn)

    p = sub.add_parser("ablate", help="run one ablation axis, emit CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--axis", required=True,
                   choices=("architecture", "aggregation", "loss"))
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    from .errors import AkdError
    try:
        return args.fn(args)
    except AkdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

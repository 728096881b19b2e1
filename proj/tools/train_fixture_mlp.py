#!/usr/bin/env python3
"""Train the small ReLU MLP used by the desk-scale tests.

Reads a dataset directory written by `cbp generate` and writes manifest.json
plus weights.bin (float32 little-endian, per layer: weight rows then bias).
"""
import argparse
import csv
import json
import pathlib

import numpy as np


def load(dataset_dir):
    catalog = json.loads((dataset_dir / "catalog.json").read_text())
    dim = catalog["feature_dim"]
    x = np.fromfile(dataset_dir / "features.bin", dtype="<f4").reshape(-1, dim)
    with open(dataset_dir / "labels.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    classes = catalog["classes"]
    y = np.array([classes.index(r["true_class"]) for r in rows])
    train = np.array([r["split"] == "train" for r in rows])
    return catalog, x.astype(np.float64), y, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", required=True, type=pathlib.Path)
    ap.add_argument("--out", required=True, type=pathlib.Path)
    ap.add_argument("--hidden", default="64,32")
    ap.add_argument("--epochs", type=int, default=400)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    catalog, x, y, train = load(args.data)
    classes = catalog["classes"]
    hidden = [int(h) for h in args.hidden.split(",")]
    dims = [x.shape[1], *hidden, len(classes)]
    rng = np.random.default_rng(args.seed)
    params = []
    for i, o in zip(dims[:-1], dims[1:]):
        params.append([rng.normal(0.0, np.sqrt(2.0 / i), (o, i)), np.zeros(o)])

    xt, yt = x[train], y[train]
    onehot = np.eye(len(classes))[yt]
    m = [[np.zeros_like(p) for p in layer] for layer in params]
    v = [[np.zeros_like(p) for p in layer] for layer in params]
    for step in range(1, args.epochs + 1):
        hs = [xt]
        for li, (w, b) in enumerate(params):
            z = hs[-1] @ w.T + b
            hs.append(z if li == len(params) - 1 else np.maximum(z, 0.0))
        logits = hs[-1] - hs[-1].max(axis=1, keepdims=True)
        prob = np.exp(logits)
        prob /= prob.sum(axis=1, keepdims=True)
        grad = (prob - onehot) / len(xt)
        for li in reversed(range(len(params))):
            w, _ = params[li]
            gw, gb = grad.T @ hs[li], grad.sum(axis=0)
            if li > 0:
                grad = (grad @ w) * (hs[li] > 0)
            for k, g in enumerate((gw, gb)):
                m[li][k] = 0.9 * m[li][k] + 0.1 * g
                v[li][k] = 0.999 * v[li][k] + 0.001 * g * g
                mh = m[li][k] / (1 - 0.9**step)
                vh = v[li][k] / (1 - 0.999**step)
                params[li][k] -= args.lr * mh / (np.sqrt(vh) + 1e-8)

    def predict(a):
        for li, (w, b) in enumerate(params):
            a = a @ w.T + b
            if li < len(params) - 1:
                a = np.maximum(a, 0.0)
        return a.argmax(axis=1)

    acc_train = (predict(xt) == yt).mean()
    acc_test = (predict(x[~train]) == y[~train]).mean()
    print(f"train accuracy {acc_train:.4f}, test accuracy {acc_test:.4f}")

    layers = []
    for li, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
        last = li == len(params) - 1
        layer = {"kind": "output" if last else "dense", "name": "out" if last else f"fc{li + 1}",
                 "input_dim": i, "output_dim": o}
        if not last:
            layer["analyzed"] = True
        layers.append(layer)
    args.out.mkdir(parents=True, exist_ok=True)
    blob = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in params]).astype("<f4")
    blob.tofile(args.out / "weights.bin")
    manifest = {"layers": layers, "activation": "relu", "class_names": classes, "weights": "weights.bin"}
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()

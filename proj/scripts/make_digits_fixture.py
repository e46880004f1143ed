#!/usr/bin/env python3
"""Builds the bundled desk-scale digit fixture.

Takes the handwritten digits that ship with scikit-learn (8x8 grayscale),
upsamples them to 28x28, writes a held-out slice in IDX format and trains a
small MLP classifier whose weights are stored in the splitkit model format.
Deterministic: rerunning reproduces the same files byte for byte.
"""

import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "digits"
SEED = 20240811
TEST_COUNT = 120
HIDDEN = (64, 32)
EPOCHS = 150
LR = 0.05


def upsample_28(images8):
    """Bilinear 8x8 -> 28x28 in [0, 1]."""
    n = images8.shape[0]
    src = images8.reshape(n, 8, 8) / 16.0
    grid = (np.arange(28) + 0.5) * (8.0 / 28.0) - 0.5
    grid = np.clip(grid, 0.0, 7.0)
    i0 = np.floor(grid).astype(int)
    i1 = np.minimum(i0 + 1, 7)
    frac = grid - i0
    rows = src[:, i0, :] * (1 - frac)[None, :, None] + src[:, i1, :] * frac[None, :, None]
    out = rows[:, :, i0] * (1 - frac)[None, None, :] + rows[:, :, i1] * frac[None, None, :]
    return np.clip(out, 0.0, 1.0)


def write_idx(images, labels, img_path, lab_path):
    n, h, w = images.shape
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, h, w))
        f.write(np.round(images * 255.0).astype(np.uint8).tobytes())
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.astype(np.uint8).tobytes())


def train_mlp(x, y, rng):
    dims = [x.shape[1], *HIDDEN, 10]
    ws = [rng.uniform(-1, 1, (dims[i + 1], dims[i])) / np.sqrt(dims[i]) for i in range(len(dims) - 1)]
    bs = [np.zeros(d) for d in dims[1:]]
    onehot = np.eye(10)[y]
    mom_w = [np.zeros_like(w) for w in ws]
    mom_b = [np.zeros_like(b) for b in bs]
    idx = np.arange(x.shape[0])
    for epoch in range(EPOCHS):
        rng.shuffle(idx)
        for start in range(0, len(idx), 64):
            batch = idx[start : start + 64]
            a = [x[batch]]
            for li, (w, b) in enumerate(zip(ws, bs)):
                z = a[-1] @ w.T + b
                a.append(np.maximum(z, 0.0) if li + 1 < len(ws) else z)
            logits = a[-1]
            p = np.exp(logits - logits.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            grad = (p - onehot[batch]) / len(batch)
            for li in reversed(range(len(ws))):
                gw = grad.T @ a[li]
                gb = grad.sum(axis=0)
                if li > 0:
                    grad = (grad @ ws[li]) * (a[li] > 0.0)
                mom_w[li] = 0.9 * mom_w[li] - LR * gw
                mom_b[li] = 0.9 * mom_b[li] - LR * gb
                ws[li] += mom_w[li]
                bs[li] += mom_b[li]
    return ws, bs


def predict(ws, bs, x):
    a = x
    for li, (w, b) in enumerate(zip(ws, bs)):
        a = a @ w.T + b
        if li + 1 < len(ws):
            a = np.maximum(a, 0.0)
    return a.argmax(axis=1)


def save_model(ws, bs, path):
    layers = [{"kind": "Flatten"}]
    tensors = []
    blob = bytearray()

    def put(name, arr):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        tensors.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "offset_bytes": len(blob),
                "byte_count": arr.nbytes,
            }
        )
        blob.extend(arr.tobytes())
        return name

    for li, (w, b) in enumerate(zip(ws, bs)):
        layers.append({"kind": "Linear", "weight": put(f"layers.{li}.weight", w)})
        layers.append({"kind": "Bias", "bias": put(f"layers.{li}.bias", b)})
        if li + 1 < len(ws):
            layers.append({"kind": "ReLU"})

    manifest = {
        "format": "splitkit-model",
        "version": 1,
        "dtype": "float64-le",
        "layout": "row-major",
        "split": False,
        "input_shape": [1, 28, 28],
        "layers": layers,
        "blob": path.with_suffix(".bin").name,
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
        "tensors": tensors,
    }
    path.with_suffix(".bin").write_bytes(bytes(blob))
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    digits = load_digits()
    images = upsample_28(digits.images.reshape(-1, 64))
    labels = digits.target
    order = rng.permutation(len(labels))
    images, labels = images[order], labels[order]

    test_x, test_y = images[:TEST_COUNT], labels[:TEST_COUNT]
    train_x, train_y = images[TEST_COUNT:], labels[TEST_COUNT:]

    write_idx(test_x, test_y, OUT / "t10k-images-idx3-ubyte", OUT / "t10k-labels-idx1-ubyte")

    ws, bs = train_mlp(train_x.reshape(len(train_x), -1), train_y, rng)
    train_acc = (predict(ws, bs, train_x.reshape(len(train_x), -1)) == train_y).mean()
    test_acc = (predict(ws, bs, test_x.reshape(len(test_x), -1)) == test_y).mean()
    print(f"train acc {train_acc:.4f}  test acc {test_acc:.4f}")
    if test_acc < 0.90:
        sys.exit("fixture model underfits; refusing to write it")

    save_model(ws, bs, OUT / "model.json")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()

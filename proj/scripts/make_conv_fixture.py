#!/usr/bin/env python3
"""Builds the conv classifier fixture on the same upsampled digit data.

Trains a small CNN (conv/relu/maxpool x2 + linear head) with torch on the
training slice produced by make_digits_fixture.py's data pipeline and
exports it to the splitkit model format in float64.
"""

import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

from make_digits_fixture import SEED, TEST_COUNT, upsample_28

from sklearn.datasets import load_digits

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "digits"
EPOCHS = 40


def build():
    torch.manual_seed(SEED)
    return nn.Sequential(
        nn.Conv2d(1, 6, 3, stride=1, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Conv2d(6, 12, 3, stride=1, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Flatten(),
        nn.Linear(12 * 7 * 7, 10),
    )


def main():
    rng = np.random.default_rng(SEED)
    digits = load_digits()
    images = upsample_28(digits.images.reshape(-1, 64))
    labels = digits.target
    order = rng.permutation(len(labels))
    images, labels = images[order], labels[order]
    test_x, test_y = images[:TEST_COUNT], labels[:TEST_COUNT]
    train_x, train_y = images[TEST_COUNT:], labels[TEST_COUNT:]

    model = build().double()
    xt = torch.from_numpy(train_x[:, None, :, :].astype(np.float64))
    yt = torch.from_numpy(train_y.astype(np.int64))
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    loss_fn = nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(SEED)
    for _ in range(EPOCHS):
        perm = torch.randperm(len(xt), generator=gen)
        for start in range(0, len(perm), 64):
            batch = perm[start : start + 64]
            opt.zero_grad()
            loss = loss_fn(model(xt[batch]), yt[batch])
            loss.backward()
            opt.step()

    with torch.no_grad():
        tx = torch.from_numpy(test_x[:, None, :, :].astype(np.float64))
        acc = (model(tx).argmax(dim=1).numpy() == test_y).mean()
    print(f"conv test acc {acc:.4f}")
    if acc < 0.90:
        sys.exit("conv fixture underfits; refusing to write it")

    layers = []
    tensors = []
    blob = bytearray()

    def put(name, arr):
        arr = np.ascontiguousarray(arr.detach().numpy(), dtype="<f8")
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

    idx = 0
    for mod in model:
        if isinstance(mod, nn.Conv2d):
            layers.append(
                {
                    "kind": "Conv2d",
                    "weight": put(f"layers.{idx}.weight", mod.weight),
                    "stride": list(mod.stride),
                    "padding": list(mod.padding),
                }
            )
            layers.append({"kind": "Bias", "bias": put(f"layers.{idx}.bias", mod.bias)})
        elif isinstance(mod, nn.ReLU):
            layers.append({"kind": "ReLU"})
        elif isinstance(mod, nn.MaxPool2d):
            layers.append({"kind": "MaxPool2d", "k": mod.kernel_size, "stride": mod.stride})
        elif isinstance(mod, nn.Flatten):
            layers.append({"kind": "Flatten"})
        elif isinstance(mod, nn.Linear):
            layers.append(
                {"kind": "Linear", "weight": put(f"layers.{idx}.weight", mod.weight)}
            )
            layers.append({"kind": "Bias", "bias": put(f"layers.{idx}.bias", mod.bias)})
        idx += 1

    manifest = {
        "format": "splitkit-model",
        "version": 1,
        "dtype": "float64-le",
        "layout": "row-major",
        "split": False,
        "input_shape": [1, 28, 28],
        "layers": layers,
        "blob": "conv_model.bin",
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
        "tensors": tensors,
    }
    (OUT / "conv_model.bin").write_bytes(bytes(blob))
    (OUT / "conv_model.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"conv fixture written to {OUT}")


if __name__ == "__main__":
    main()

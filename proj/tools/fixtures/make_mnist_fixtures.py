#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Builds the committed MNIST fixtures: IDX subsets, a trained AFW1 model and golden logits.

The digit source is the JSON bundle shipped in the `mnist` npm package
(10000 digits, pixel intensities in [0,1] rounded to three decimals).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/fixtures/make_mnist_fixtures.py --digits package/src/digits --out data
"""

import argparse
import hashlib
import json
import pathlib
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

MEAN = 0.1307
STD = 0.3081


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 32, 3, 1)
        self.conv2 = nn.Conv2d(32, 64, 3, 1)
        self.dropout1 = nn.Dropout(0.25)
        self.dropout2 = nn.Dropout(0.5)
        self.fc1 = nn.Linear(9216, 128)
        self.fc2 = nn.Linear(128, 10)

    def forward(self, x):
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        x = F.max_pool2d(x, 2)
        x = self.dropout1(x)
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        x = self.dropout2(x)
        return self.fc2(x)


def load_digits(root):
    images, labels = [], []
    for d in range(10):
        raw = np.asarray(json.loads((root / f"{d}.json").read_text())["data"], dtype=np.float64)
        n = raw.size // 784
        images.append(np.rint(raw[: n * 784].reshape(n, 28, 28) * 255.0).clip(0, 255).astype(np.uint8))
        labels.append(np.full(n, d, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_idx(path, images, labels):
    with open(str(path) + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.tobytes())
    with open(str(path) + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())


def to_tensor(images):
    x = torch.from_numpy(images.astype(np.float32) / np.float32(255.0)).unsqueeze(1)
    return (x - np.float32(MEAN)) / np.float32(STD)


def train(model, x, y, epochs, seed):
    g = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adadelta(model.parameters(), lr=1.0)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=1, gamma=0.7)
    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(len(x), generator=g)
        for i in range(0, len(x), 64):
            idx = perm[i : i + 64]
            opt.zero_grad()
            loss = F.cross_entropy(model(x[idx]), y[idx])
            loss.backward()
            opt.step()
        sched.step()
        print(f"epoch {epoch}: last loss {loss.item():.4f}")


def accuracy(model, x, y):
    model.eval()
    with torch.no_grad():
        return (model(x).argmax(1) == y).float().mean().item()


def export_afw1(model, path):
    sd = {k: v.detach().numpy().astype("<f4") for k, v in model.state_dict().items()}
    order = ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
             "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]
    tensors, payload, offset = [], bytearray(), 0
    for name in order:
        arr = np.ascontiguousarray(sd[name])
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload += arr.tobytes()
        offset += arr.nbytes
    spec = {
        "input_shape": [1, 28, 28],
        "num_classes": 10,
        "normalization": {"mean": [MEAN], "std": [STD]},
        "layers": [
            {"kind": "conv2d", "name": "conv1", "weight": "conv1.weight", "bias": "conv1.bias",
             "stride": [1, 1], "padding": [0, 0]},
            {"kind": "relu"},
            {"kind": "conv2d", "name": "conv2", "weight": "conv2.weight", "bias": "conv2.bias",
             "stride": [1, 1], "padding": [0, 0], "tag": "last-conv"},
            {"kind": "relu"},
            {"kind": "maxpool", "kernel": 2, "stride": 2},
            {"kind": "flatten"},
            {"kind": "linear", "name": "fc1", "weight": "fc1.weight", "bias": "fc1.bias"},
            {"kind": "relu"},
            {"kind": "linear", "name": "fc2", "weight": "fc2.weight", "bias": "fc2.bias"},
        ],
        "tensors": tensors,
    }
    js = json.dumps(spec, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(b"AFW1")
        f.write(struct.pack("<IQ", 1, len(js)))
        f.write(js)
        f.write(payload)
    return spec, hashlib.sha256(payload).hexdigest()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", type=pathlib.Path, required=True)
    ap.add_argument("--out", type=pathlib.Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--train-n", type=int, default=8500)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)

    images, labels = load_digits(args.digits)
    perm = np.random.RandomState(args.seed).permutation(len(images))
    images, labels = images[perm], labels[perm]
    tr_img, tr_lab = images[: args.train_n], labels[: args.train_n]
    ho_img, ho_lab = images[args.train_n :], labels[args.train_n :]

    (args.out / "mnist").mkdir(parents=True, exist_ok=True)
    (args.out / "models").mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "mnist" / "train-2000", tr_img[:2000], tr_lab[:2000])
    write_idx(args.out / "mnist" / "val-1000", ho_img[:1000], ho_lab[:1000])

    model = Net()
    x_tr, y_tr = to_tensor(tr_img), torch.from_numpy(tr_lab.astype(np.int64))
    x_ho, y_ho = to_tensor(ho_img), torch.from_numpy(ho_lab.astype(np.int64))
    train(model, x_tr, y_tr, args.epochs, args.seed)
    acc = accuracy(model, x_ho, y_ho)
    print(f"held-out accuracy: {acc:.4f} on {len(x_ho)} images")

    spec, checksum = export_afw1(model, args.out / "models" / "mnist_cnn.afw1")

    model.eval()
    with torch.no_grad():
        logits = model(x_ho[:100]).numpy()
    with open(args.out / "mnist" / "golden_logits.csv", "w") as f:
        f.write("index,label," + ",".join(f"logit_{k}" for k in range(10)) + "\n")
        for i in range(100):
            f.write(f"{i},{ho_lab[i]}," + ",".join(f"{v:.6g}" for v in logits[i]) + "\n")

    manifest = {
        "architecture": spec["layers"],
        "training": {"seed": args.seed, "epochs": args.epochs, "train_images": int(args.train_n),
                     "optimizer": "adadelta", "lr": 1.0, "step_gamma": 0.7, "batch": 64},
        "heldout_accuracy": acc,
        "heldout_images": int(len(x_ho)),
        "fixtures": {"file": "mnist/golden_logits.csv", "source": "mnist/val-1000", "count": 100},
        "payload_sha256": checksum,
    }
    (args.out / "models" / "mnist_cnn.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()

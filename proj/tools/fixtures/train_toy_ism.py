"""Trains the toy polar segmentation net on label-gen output and writes ENET weights.

Usage: train_toy_ism.py --data <dir with seed_*/labels> --out toy_ism.enet [--reference toy_ism_reference.egrid]
"""

import argparse
import copy
import glob
import json
import os
import struct
import time

import numpy as np
import torch
import torch.nn.functional as F

KIND = {"conv3x3": 0, "conv1x1": 1, "down": 2, "up": 3, "relu": 4, "softmax": 5}
TOPOLOGY = [
    ("conv3x3", 1, 16), ("relu",), ("down",),
    ("conv3x3", 16, 32), ("relu",), ("down",),
    ("conv3x3", 32, 32), ("relu",), ("up",),
    ("conv3x3", 32, 16), ("relu",), ("up",),
    ("conv3x3", 16, 16), ("relu",), ("dropout",),
    ("conv1x1", 16, 3), ("softmax",),
]


def read_egrid(path):
    b = open(path, "rb").read()
    if b[:4] != b"EGRD":
        raise ValueError(f"{path}: bad magic")
    d0, d1 = struct.unpack_from("<II", b, 9)
    (channels,) = struct.unpack_from("<I", b, 33)
    if channels == 1:
        return np.frombuffer(b, np.uint8, offset=37).reshape(d0, d1)
    return np.frombuffer(b, np.float32, offset=37).reshape(channels, d0, d1)


def write_egrid(path, planes, bin0, bin1):
    c, d0, d1 = planes.shape
    head = b"EGRD" + struct.pack("<IBIIddI", 1, 0, d0, d1, bin0, bin1, c)
    with open(path, "wb") as f:
        f.write(head + planes.astype("<f4").tobytes())


class ToyNet(torch.nn.Module):
    def __init__(self, dropout_p):
        super().__init__()
        self.convs = torch.nn.ModuleList()
        for layer in TOPOLOGY:
            if layer[0] in ("conv3x3", "conv1x1"):
                k = 3 if layer[0] == "conv3x3" else 1
                self.convs.append(torch.nn.Conv2d(layer[1], layer[2], k, padding=k // 2))
        self.dropout_p = dropout_p

    def forward(self, x):
        convs = iter(self.convs)
        for layer in TOPOLOGY:
            kind = layer[0]
            if kind.startswith("conv"):
                x = next(convs)(x)
            elif kind == "relu":
                x = F.relu(x)
            elif kind == "down":
                x = F.max_pool2d(x, 2)
            elif kind == "up":
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            elif kind == "dropout":
                x = F.dropout(x, self.dropout_p, self.training)
            elif kind == "softmax":
                x = torch.softmax(x, dim=1)
        return x

    def export(self, path):
        layers = [l for l in TOPOLOGY if l[0] != "dropout"]
        out = bytearray(b"ENET" + struct.pack("<II", 1, len(layers)))
        convs = iter(self.convs)
        c = 1
        for layer in layers:
            kind = layer[0]
            if kind.startswith("conv"):
                conv = next(convs)
                c_in, c_out = layer[1], layer[2]
                out += struct.pack("<BII", KIND[kind], c_in, c_out)
                out += conv.weight.detach().numpy().astype("<f4").tobytes()
                out += conv.bias.detach().numpy().astype("<f4").tobytes()
                c = c_out
            else:
                out += struct.pack("<BII", KIND[kind], c, c if kind != "softmax" else 3)
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(bytes(out))
        os.replace(tmp, path)


def dice_loss(probs, onehot, eps=1.0):
    dims = (0, 2, 3)
    inter = (probs * onehot).sum(dims)
    union = probs.sum(dims) + onehot.sum(dims)
    return (1.0 - (2.0 * inter + eps) / (union + eps)).mean()


def load(data_dir):
    samples = []
    for index in sorted(glob.glob(os.path.join(data_dir, "seed_*", "labels", "index.jsonl"))):
        base = os.path.dirname(index)
        for line in open(index):
            rec = json.loads(line)
            x = read_egrid(os.path.join(base, rec["input"])).astype(np.float32)
            y = read_egrid(os.path.join(base, rec["label"])).astype(np.int64)
            samples.append((rec["seed"], x, y))
    if not samples:
        raise SystemExit(f"no samples under {data_dir}")
    return samples


def pad(a, multiple=4):
    r = -a.shape[-2] % multiple
    c = -a.shape[-1] % multiple
    return np.pad(a, [(0, 0)] * (a.ndim - 2) + [(0, r), (0, c)])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--reference")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--dropout", type=float, default=0.1)
    ap.add_argument("--flip-prob", type=float, default=0.5)
    ap.add_argument("--val-seeds", type=int, default=1)
    args = ap.parse_args()

    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    samples = load(args.data)
    seeds = sorted({s for s, _, _ in samples})
    val_seeds = set(seeds[-args.val_seeds:])
    train = [(x, y) for s, x, y in samples if s not in val_seeds]
    val = [(x, y) for s, x, y in samples if s in val_seeds]
    print(f"{len(train)} training and {len(val)} validation samples")

    net = ToyNet(args.dropout)
    opt = torch.optim.Adam(net.parameters(), lr=args.lr)
    rows, cols = train[0][1].shape
    best_miou, best_state = -1.0, None
    for epoch in range(args.epochs):
        net.train()
        order = rng.permutation(len(train))
        total, t0 = 0.0, time.time()
        for start in range(0, len(order), args.batch):
            xs, ys = [], []
            for i in order[start:start + args.batch]:
                x, y = train[i]
                if rng.random() < args.flip_prob:
                    x, y = x[::-1], y[::-1]
                xs.append(pad(x[None]))
                ys.append(y)
            x = torch.from_numpy(np.stack(xs))
            y = torch.from_numpy(np.stack(ys))
            probs = net(x)[:, :, :rows, :cols]
            loss = dice_loss(probs, F.one_hot(y, 3).permute(0, 3, 1, 2).float())
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(xs)
        net.eval()
        inter, union = np.zeros(3), np.zeros(3)
        with torch.no_grad():
            for x, y in val:
                pred = net(torch.from_numpy(pad(x[None, None])))[0, :, :rows, :cols].argmax(0).numpy()
                for k in range(3):
                    inter[k] += np.sum((pred == k) & (y == k))
                    union[k] += np.sum((pred == k) | (y == k))
        iou = inter / np.maximum(union, 1)
        print(f"epoch {epoch}: loss {total / len(train):.4f} val mIoU {iou.mean():.4f} "
              f"(F {iou[0]:.3f} O {iou[1]:.3f} U {iou[2]:.3f}) {time.time() - t0:.0f}s", flush=True)
        if iou.mean() > best_miou:
            best_miou, best_state = iou.mean(), copy.deepcopy(net.state_dict())
            net.export(args.out)

    net.load_state_dict(best_state)
    net.eval()
    print(f"kept val mIoU {best_miou:.4f}")

    if args.reference:
        x = val[0][0][:60, :70].copy()
        with torch.no_grad():
            probs = net(torch.from_numpy(pad(x[None, None])))[0, :, :60, :70].numpy()
        planes = np.concatenate([x[None], probs])
        write_egrid(args.reference, planes, 0.36, 0.2)


if __name__ == "__main__":
    main()

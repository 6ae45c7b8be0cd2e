"""Writes the test fixtures: a small random classifier in MDNN format with
golden forward passes, a synthetic digit archive in IDX format, and the
combined pixel histogram of that archive in MDHS format.

Run from this directory with `python3 make_fixtures.py`. Only numpy is needed.
"""

import json
import struct

import numpy as np

SEED = 2021
H = W = 28
KERNELS = 4
HIDDEN = 16
CLASSES = 10
BINS = 32


def conv_relu(x, w, b):
    k, c, kh, kw = w.shape
    _, h, wd = x.shape
    out = np.zeros((k, h - kh + 1, wd - kw + 1))
    for r in range(h - kh + 1):
        for q in range(wd - kw + 1):
            patch = x[:, r:r + kh, q:q + kw]
            out[:, r, q] = np.tensordot(w, patch, axes=([1, 2, 3], [0, 1, 2])) + b
    return np.maximum(out, 0.0)


def maxpool(x, k):
    c, h, w = x.shape
    oh, ow = (h - k) // k + 1, (w - k) // k + 1
    return x[:, :oh * k, :ow * k].reshape(c, oh, k, ow, k).max(axis=(2, 4))


def forward(params, img):
    cw, cb, w1, b1, w2, b2 = (p.astype(np.float64) for p in params)
    x = img.reshape(1, H, W)
    x = maxpool(conv_relu(x, cw, cb), 2).reshape(-1)
    x = np.maximum(w1 @ x + b1, 0.0)
    g = w2 @ x + b2
    e = np.exp(g - g.max())
    return g, e / e.sum()


def write_mdnn(path, params):
    cw, cb, w1, b1, w2, b2 = params
    layers = []
    conv = struct.pack("<7I", 1, KERNELS, 3, 3, 1, 0, 1) + cw.astype("<f4").tobytes() + cb.astype("<f4").tobytes()
    layers.append((1, conv))
    layers.append((2, struct.pack("<2I", 2, 2)))
    layers.append((3, b""))
    layers.append((4, struct.pack("<3I", w1.shape[1], HIDDEN, 1) + w1.astype("<f4").tobytes() + b1.astype("<f4").tobytes()))
    layers.append((5, struct.pack("<f", 0.2)))
    layers.append((4, struct.pack("<3I", HIDDEN, CLASSES, 0) + w2.astype("<f4").tobytes() + b2.astype("<f4").tobytes()))
    out = b"MDNN" + struct.pack("<5I", 1, 1, H, W, len(layers))
    for tag, payload in layers:
        out += struct.pack("<IQ", tag, len(payload)) + payload
    with open(path, "wb") as f:
        f.write(out)
    pooled = (H - 2) // 2
    sidecar = {
        "format": "MDNN",
        "version": 1,
        "input": [1, H, W],
        "layers": [
            {"type": "conv2d", "kernels": KERNELS, "kernel": [3, 3], "stride": 1, "padding": 0,
             "activation": "relu", "output": [KERNELS, H - 2, W - 2]},
            {"type": "maxpool", "window": 2, "stride": 2, "output": [KERNELS, pooled, pooled]},
            {"type": "flatten", "output": [KERNELS * pooled * pooled, 1, 1]},
            {"type": "dense", "inputs": KERNELS * pooled * pooled, "outputs": HIDDEN,
             "activation": "relu", "output": [HIDDEN, 1, 1]},
            {"type": "dropout", "rate": float(np.float32(0.2)), "output": [HIDDEN, 1, 1]},
            {"type": "dense", "inputs": HIDDEN, "outputs": CLASSES,
             "activation": "identity", "output": [CLASSES, 1, 1]},
        ],
        "fixture": {"mode": "toy", "seed": SEED,
                    "note": "random weights at reduced scale: 4 kernels, 16 hidden units"},
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def digit(rng, y):
    """A crude synthetic digit: class-specific strokes with jitter and noise."""
    img = np.zeros((H, W))
    rr, cc = np.mgrid[0:H, 0:W]
    dr, dc = rng.integers(-2, 3, size=2)
    r0, c0 = 14 + dr, 14 + dc
    if y == 0:
        rad = np.hypot(rr - r0, (cc - c0) * 1.4)
        img[np.abs(rad - 8) < 1.6] = 1.0
    elif y == 1:
        img[r0 - 9:r0 + 10, c0 - 1:c0 + 1] = 1.0
    else:
        # a few strokes chosen by the class id
        for s in range(2 + y % 3):
            a = (y * 37 + s * 71) % 180 * np.pi / 180
            t = np.linspace(-8, 8, 60)
            rs = np.clip(np.round(r0 + (s - 1) * 4 + t * np.sin(a)).astype(int), 0, H - 1)
            cs = np.clip(np.round(c0 + t * np.cos(a)).astype(int), 0, W - 1)
            img[rs, cs] = 1.0
    img = np.clip(img * rng.uniform(0.7, 1.0) + rng.uniform(0, 0.15, size=img.shape) * (img > 0), 0, 1)
    return np.round(img * 255).astype(np.uint8)


def main():
    rng = np.random.default_rng(SEED)
    cw = rng.normal(0, np.sqrt(2 / 9), size=(KERNELS, 1, 3, 3)).astype(np.float32)
    cb = rng.normal(0, 0.05, size=KERNELS).astype(np.float32)
    flat = KERNELS * 13 * 13
    w1 = rng.normal(0, np.sqrt(2 / flat), size=(HIDDEN, flat)).astype(np.float32)
    b1 = rng.normal(0, 0.05, size=HIDDEN).astype(np.float32)
    w2 = rng.normal(0, np.sqrt(1 / HIDDEN), size=(CLASSES, HIDDEN)).astype(np.float32)
    b2 = rng.normal(0, 0.05, size=CLASSES).astype(np.float32)
    params = (cw, cb, w1, b1, w2, b2)
    write_mdnn("fixture_net.mdnn", params)

    labels = np.repeat(np.arange(CLASSES), 12).astype(np.uint8)
    images = np.stack([digit(rng, int(y)) for y in labels])
    with open("digits-images.idx", "wb") as f:
        f.write(struct.pack(">4I", 0x803, len(images), H, W) + images.tobytes())
    with open("digits-labels.idx", "wb") as f:
        f.write(struct.pack(">2I", 0x801, len(labels)) + labels.tobytes())

    names = ["zeros", "ones", "digit0", "digit1", "digit7"]
    picks = [np.zeros(H * W), np.ones(H * W)] + [
        images[np.flatnonzero(labels == y)[0]].reshape(-1) / 255.0 for y in (0, 1, 7)
    ]
    goldens = []
    for name, x in zip(names, picks):
        g, f = forward(params, x)
        goldens.append({"name": name, "input": x.tolist(), "logits": g.tolist(), "softmax": f.tolist()})
    with open("fixture_goldens.json", "w") as f:
        json.dump({"seed": SEED, "goldens": goldens}, f)
        f.write("\n")

    vals = images.reshape(len(images), -1).astype(np.float64) / 255.0
    bins = np.minimum((np.clip(vals, 0, 1) * BINS).astype(np.int64), BINS - 1)
    edges = np.arange(BINS + 1, dtype=np.float64) / BINS
    dataset = b"synthetic-digits"
    out = b"MDHS" + struct.pack("<IiQI", 1, -1, len(images), len(dataset)) + dataset
    out += struct.pack("<I", H * W)
    for p in range(H * W):
        counts = np.bincount(bins[:, p], minlength=BINS)
        probs = counts / float(len(images))
        out += struct.pack("<I", BINS) + edges.astype("<f8").tobytes() + probs.astype("<f8").tobytes()
    with open("digits-combined.mdhs", "wb") as f:
        f.write(out)


if __name__ == "__main__":
    main()

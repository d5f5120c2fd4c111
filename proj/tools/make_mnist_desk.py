#!/usr/bin/env python3
"""Build the desk-scale MNIST subset used by the experiments.

Source: the `mnist` npm package (MIT, 10,000 original MNIST digits stored as
pixel/255 floats rounded to three decimals). Pixel bytes are recovered exactly
by rounding v*255. A seeded shuffle splits the pool into 5,000 training and
1,000 test images, written as standard big-endian IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 tools/make_mnist_desk.py package/src/digits data/mnist_desk
"""
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, images, labels_path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    pool = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            px = [int(round(v * 255)) for v in data[k * 784:(k + 1) * 784]]
            pool.append((px, digit))
    random.Random(20221).shuffle(pool)
    train, test = pool[:5000], pool[5000:6000]
    dst.mkdir(parents=True, exist_ok=True)
    write_idx(dst / "train-images-idx3-ubyte", [p for p, _ in train],
              dst / "train-labels-idx1-ubyte", [l for _, l in train])
    write_idx(dst / "t10k-images-idx3-ubyte", [p for p, _ in test],
              dst / "t10k-labels-idx1-ubyte", [l for _, l in test])


if __name__ == "__main__":
    main()

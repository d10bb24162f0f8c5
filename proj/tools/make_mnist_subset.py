#!/usr/bin/env python3
# Copyright (c) 2026, The mrvn Authors
# SPDX-License-Identifier: Apache-2.0
"""Build the small MNIST IDX subset under data/mnist-subset.

Source: the `mnist` npm package (MIT, Juan Cazala), which ships 10k MNIST
digits as per-class JSON arrays of 784 floats in [0, 1].

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 50
PIXELS = 28 * 28


def write_idx(prefix: Path, samples):
    with open(prefix.with_name(prefix.name + "-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in pixels))
    with open(prefix.with_name(prefix.name + "-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main(src: Path, dst: Path):
    train, test = [], []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        images = [raw[i * PIXELS:(i + 1) * PIXELS] for i in range(len(raw) // PIXELS)]
        train += [(img, digit) for img in images[:TRAIN_PER_CLASS]]
        test += [(img, digit) for img in images[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng = random.Random(20211)
    rng.shuffle(train)
    rng.shuffle(test)
    dst.mkdir(parents=True, exist_ok=True)
    write_idx(dst / "train", train)
    write_idx(dst / "t10k", test)


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))

#!/usr/bin/env python3
"""Build the small MNIST / Fashion-MNIST IDX files under data/.

The npm packages `mnist` (10k MNIST digits, floats in [0,1]) and
`fashion-mnist` (70k samples, uint8) ship the images as JSON. This script
unpacks them (run `npm pack mnist@1.1.0 fashion-mnist@1.1.0` in SRC first),
draws a seeded class-interleaved subset, and writes standard uncompressed IDX
files (magic 0x00000803 / 0x00000801, big-endian sizes).

usage: make_idx_fixtures.py SRC_DIR OUT_DIR
"""
import json
import random
import struct
import sys
import tarfile
from pathlib import Path

N_TRAIN = 4000
N_TEST = 1000
SIDE = 28


def read_pkg(tgz, member_dir):
    with tarfile.open(tgz) as tar:
        classes = []
        for label in range(10):
            f = tar.extractfile(f"package/src/{member_dir}/{label}.json")
            data = json.load(f)["data"]
            if data and isinstance(data[0], list):
                imgs = [bytes(int(v) for v in img) for img in data]
            else:
                px = SIDE * SIDE
                imgs = [
                    bytes(int(round(v * 255)) for v in data[i : i + px])
                    for i in range(0, len(data) - px + 1, px)
                ]
            classes.append(imgs)
    return classes


def split(classes, seed):
    rng = random.Random(seed)
    pool = [(img, label) for label, imgs in enumerate(classes) for img in imgs]
    rng.shuffle(pool)
    return pool[:N_TRAIN], pool[N_TRAIN : N_TRAIN + N_TEST]


def write_idx(out, stem, rows):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), SIDE, SIDE))
        for img, _ in rows:
            f.write(img)
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    for name, tgz, member, seed in [
        ("mnist", "mnist-1.1.0.tgz", "digits", 1),
        ("fashion", "fashion-mnist-1.1.0.tgz", "clothes", 2),
    ]:
        train, test = split(read_pkg(src / tgz, member), seed)
        write_idx(out / name, "train", train)
        write_idx(out / name, "t10k", test)


if __name__ == "__main__":
    main()

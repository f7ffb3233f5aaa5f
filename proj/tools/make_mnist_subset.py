#!/usr/bin/env python3
"""Write the 5000-digit MNIST subset bundled with mlxtend as standard IDX files.

usage: make_mnist_subset.py <mlxtend wheel> <output dir>

The wheel can be fetched with `pip download mlxtend --no-deps`.
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    wheel, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = [line.split(",") for line in raw.strip().splitlines()]
    images = bytearray()
    labels = bytearray()
    for r in rows:
        images.extend(int(float(v)) for v in r[:-1])
        labels.append(int(float(r[-1])))
    n = len(rows)
    (out / "train-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + bytes(images))
    (out / "train-labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + bytes(labels))
    print(f"wrote {n} samples to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

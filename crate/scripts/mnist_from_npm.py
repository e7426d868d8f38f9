#!/usr/bin/env python3
"""Build gzipped MNIST IDX files from the digits bundled in the npm `mnist` package.

The package ships 10,000 MNIST digits as per-class JSON files with pixel
intensities pre-divided by 255 and rounded to three decimals. This script
restores the byte values, shuffles with a fixed seed and writes a 9,000 / 1,000
train/test split in the standard IDX layout.

Usage: scripts/mnist_from_npm.py <npm-package-dir> <out-dir>
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for digit in range(10):
        data = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            pixels = bytes(round(v * 255) for v in data[k * 784:(k + 1) * 784])
            samples.append((pixels, digit))
    random.Random(20250101).shuffle(samples)
    n_test = 1000
    splits = {"train": samples[n_test:], "t10k": samples[:n_test]}
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        images = struct.pack(">IIII", 0x00000803, len(rows), 28, 28) + b"".join(p for p, _ in rows)
        labels = struct.pack(">II", 0x00000801, len(rows)) + bytes(d for _, d in rows)
        # mtime=0 keeps the archives byte-reproducible
        with gzip.GzipFile(out / f"{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(images)
        with gzip.GzipFile(out / f"{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(labels)
        print(f"{name}: {len(rows)} samples")


if __name__ == "__main__":
    main()

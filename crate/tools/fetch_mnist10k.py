#!/usr/bin/env python3
"""Build a 10,000-digit MNIST subset in IDX format.

The digits come from the `mnist` npm package (src/digits/<d>.json, 784 floats
per image in [0,1], three decimals). Records are written in a seeded shuffled
order as gzip-compressed IDX files.

    python3 tools/fetch_mnist10k.py [--package-dir DIR] [--out data/mnist10k]
"""
import argparse
import gzip
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path


def fetch_package(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = next(workdir.glob("mnist-*.tgz"))
    with tarfile.open(tgz) as tar:
        tar.extractall(workdir)
    return workdir / "package"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--package-dir", type=Path)
    ap.add_argument("--out", type=Path, default=Path("data/mnist10k"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package_dir or fetch_package(Path(tmp))
        records = []
        for digit in range(10):
            flat = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
            for i in range(0, len(flat), 784):
                pixels = bytes(min(255, max(0, round(v * 255))) for v in flat[i:i + 784])
                records.append((pixels, digit))

    random.Random(args.seed).shuffle(records)
    args.out.mkdir(parents=True, exist_ok=True)
    n = len(records)
    with gzip.GzipFile(args.out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pixels, _ in records:
            f.write(pixels)
    with gzip.GzipFile(args.out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in records))
    print(f"wrote {n} records to {args.out}")


if __name__ == "__main__":
    main()

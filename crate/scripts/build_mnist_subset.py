"""Rebuild the bundled MNIST subset as gzipped IDX files.

Sources (both are verbatim MNIST digits redistributed inside packages):
  * npm `mnist` 1.1.0   (src/digits/{0..9}.json, 10,000 digits)  -> train split
  * PyPI `mlxtend` 0.24 (mlxtend/data/data/mnist_5k.csv.gz)       -> test split

Usage:
  python3 scripts/build_mnist_subset.py <npm-package-dir> <mlxtend-wheel> <out-dir>
"""
import gzip
import io
import json
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def write_idx(out: Path, prefix: str, images: np.ndarray, labels: np.ndarray) -> None:
    n = len(labels)
    with gzip.GzipFile(out / f"{prefix}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with gzip.GzipFile(out / f"{prefix}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    npm_dir, wheel, out = Path(sys.argv[1]), Path(sys.argv[2]), Path(sys.argv[3])
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20251016)

    xs, ys = [], []
    for digit in range(10):
        data = json.loads((npm_dir / "src" / "digits" / f"{digit}.json").read_text())["data"]
        arr = np.rint(np.asarray(data, dtype=np.float64).reshape(-1, 784) * 255.0)
        xs.append(arr)
        ys.append(np.full(len(arr), digit))
    train_x, train_y = np.vstack(xs), np.concatenate(ys)
    perm = rng.permutation(len(train_y))
    write_idx(out, "train", np.clip(train_x[perm], 0, 255), train_y[perm])

    raw = gzip.decompress(zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz"))
    rows = np.loadtxt(io.StringIO(raw.decode()), delimiter=",")
    test_x, test_y = rows[:, :784], rows[:, 784]
    perm = rng.permutation(len(test_y))
    write_idx(out, "t10k", test_x[perm], test_y[perm])


if __name__ == "__main__":
    main()

"""Write the 5000-image MNIST subset bundled with mlxtend as gzipped IDX files.

The sandbox has no direct route to the MNIST mirrors, but the package index is
reachable and mlxtend ships 500 images per digit as ``mnist_5k.csv.gz``
(784 pixel columns followed by the label). Usage::

    python scripts/make_mnist_subset.py [--wheel PATH] [--out data/mnist]
"""

import argparse
import glob
import gzip
import io
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(dest: str) -> str:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", dest, "mlxtend"],
        check=True,
    )
    return sorted(glob.glob(f"{dest}/mlxtend-*.whl"))[-1]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", help="local mlxtend wheel; downloaded when omitted")
    ap.add_argument("--out", default="data/mnist")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        raw = zipfile.ZipFile(wheel).read(MEMBER)
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    images = table[:, :784].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, 784].astype(np.uint8)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = len(labels)
    with gzip.GzipFile(out / "train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28) + images.tobytes())
    with gzip.GzipFile(out / "train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n) + labels.tobytes())
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()

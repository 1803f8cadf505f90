"""Build the MNIST IDX fixture used by the test suite.

The sandbox cannot reach the usual MNIST mirrors, but the ``mnist-data`` npm
package ships the original uncompressed IDX files.  This script packs that
tarball, checks the training files against their published SHA-256 digests,
keeps the training images of digits 0, 1, 8 and 9 in their original order
and writes them as gzipped IDX files (deterministic gzip headers).

    python scripts/make_mnist_fixture.py tests/data/mnist
"""

from __future__ import annotations

import argparse
import gzip
import hashlib
import os
import struct
import subprocess
import tarfile
import tempfile

import numpy as np

PACKAGE = "mnist-data@1.2.6"
DIGITS = (0, 1, 8, 9)
SHA256 = {
    "train-images-idx3-ubyte": "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    "train-labels-idx1-ubyte": "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
}


def fetch() -> dict[str, bytes]:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        tarball = next(f for f in os.listdir(tmp) if f.endswith(".tgz"))
        out = {}
        with tarfile.open(os.path.join(tmp, tarball)) as tar:
            for name, digest in SHA256.items():
                raw = tar.extractfile(f"package/data/{name}").read()
                if hashlib.sha256(raw).hexdigest() != digest:
                    raise SystemExit(f"{name}: checksum mismatch")
                out[name] = raw
    return out


def write_idx(out_dir: str, images: np.ndarray, labels: np.ndarray) -> None:
    os.makedirs(out_dir, exist_ok=True)
    n = len(labels)
    with gzip.GzipFile(os.path.join(out_dir, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">iiii", 2051, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with gzip.GzipFile(os.path.join(out_dir, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">ii", 2049, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir")
    args = parser.parse_args()

    files = fetch()
    images = np.frombuffer(files["train-images-idx3-ubyte"], np.uint8, offset=16).reshape(-1, 28, 28)
    labels = np.frombuffer(files["train-labels-idx1-ubyte"], np.uint8, offset=8)
    keep = np.isin(labels, DIGITS)
    write_idx(args.out_dir, images[keep], labels[keep])
    print(f"wrote {int(keep.sum())} images to {args.out_dir}")


if __name__ == "__main__":
    main()

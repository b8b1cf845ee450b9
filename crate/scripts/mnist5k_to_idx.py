#!/usr/bin/env python3
"""Write the 5000-digit MNIST subset bundled with mlxtend as gzipped IDX files.

Usage: python3 scripts/mnist5k_to_idx.py [OUT_DIR]

Requires a local copy of the mlxtend wheel or package (pip download mlxtend).
"""
import glob
import gzip
import io
import os
import struct
import sys
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv_gz():
    try:
        import mlxtend  # noqa: F401
        path = os.path.join(os.path.dirname(mlxtend.__file__), "data", "data", "mnist_5k.csv.gz")
        with open(path, "rb") as f:
            return f.read()
    except ImportError:
        pass
    wheels = sorted(glob.glob("/tmp/**/mlxtend-*.whl", recursive=True))
    if not wheels:
        sys.exit("mlxtend not found: run `pip download --no-deps -d /tmp/pp mlxtend` first")
    return zipfile.ZipFile(wheels[-1]).read(MEMBER)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/mnist5k"
    os.makedirs(out, exist_ok=True)
    rows = gzip.decompress(read_csv_gz()).decode().splitlines()
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        vals = [int(float(v)) for v in row.split(",")]
        assert len(vals) == 785
        pixels.extend(vals[:784])
        labels.append(vals[784])
    n = len(rows)
    img = struct.pack(">IIII", 2051, n, 28, 28) + bytes(pixels)
    lab = struct.pack(">II", 2049, n) + bytes(labels)
    # mtime=0 keeps the archives byte-stable across runs
    for name, payload in (("images-idx3-ubyte.gz", img), ("labels-idx1-ubyte.gz", lab)):
        with open(os.path.join(out, name), "wb") as f:
            with gzip.GzipFile(fileobj=f, mode="wb", mtime=0, filename="") as g:
                g.write(payload)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()

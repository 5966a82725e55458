#!/usr/bin/env python3
"""Write the 5,000-sample MNIST subset shipped inside the mlxtend wheel as
gzipped IDX files (data/mnist-desk/).

    pip download --no-deps mlxtend -d /tmp/whl
    python3 tools/make_mnist_desk.py /tmp/whl/mlxtend-*.whl data/mnist-desk
"""
import gzip
import io
import os
import struct
import sys
import zipfile

import numpy as np


def main(wheel, out_dir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    os.makedirs(out_dir, exist_ok=True)
    # mtime=0 keeps the archives byte-reproducible.
    with gzip.GzipFile(os.path.join(out_dir, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(os.path.join(out_dir, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(images)} samples to {out_dir}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])

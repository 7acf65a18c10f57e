#!/usr/bin/env python3
"""Convert the 10k-digit MNIST sample shipped in the npm `mnist` package into
an IDX image/label pair.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/

The package stores pixels as byte/255 rounded to three decimals, so rounding
x*255 recovers the original bytes.
"""
import json
import struct
import sys
from pathlib import Path


def main():
    if len(sys.argv) != 3:
        sys.exit("usage: make_mnist_subset.py DIGITS_DIR OUT_DIR")
    digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)

    images = bytearray()
    labels = bytearray()
    for digit in range(10):
        data = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
        if len(data) % 784:
            sys.exit(f"{digit}.json: length {len(data)} is not a multiple of 784")
        images.extend(min(255, max(0, round(v * 255))) for v in data)
        labels.extend([digit] * (len(data) // 784))

    n = len(labels)
    with open(out_dir / "mnist10k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images)
    with open(out_dir / "mnist10k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} images to {out_dir}")


if __name__ == "__main__":
    main()

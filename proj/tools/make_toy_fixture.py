#!/usr/bin/env python3
"""Build the small CSV fixture used by the CLI smoke test.

Takes the first N digits of each class from an IDX pair, average-pools them
from 28x28 down to 7x7 and writes `label,p0,...,p48` rows.

    python3 tools/make_toy_fixture.py data/ tests/fixtures/mnist7x7.csv
"""
import struct
import sys
from pathlib import Path

PER_CLASS = 40
POOL = 4


def read_idx(path, magic):
    raw = path.read_bytes()
    got, count = struct.unpack(">II", raw[:8])
    if got != magic:
        sys.exit(f"{path}: bad magic {got:#x}")
    return raw, count


def main():
    if len(sys.argv) != 3:
        sys.exit("usage: make_toy_fixture.py DATA_DIR OUT_CSV")
    data_dir, out = Path(sys.argv[1]), Path(sys.argv[2])
    images, n = read_idx(data_dir / "mnist10k-images-idx3-ubyte", 0x803)
    labels, _ = read_idx(data_dir / "mnist10k-labels-idx1-ubyte", 0x801)
    rows, cols = struct.unpack(">II", images[8:16])
    side = rows // POOL

    taken = {c: 0 for c in range(10)}
    lines = []
    for i in range(n):
        label = labels[8 + i]
        if taken[label] >= PER_CLASS:
            continue
        taken[label] += 1
        base = 16 + i * rows * cols
        pixels = []
        for r in range(side):
            for c in range(side):
                total = sum(images[base + (r * POOL + dr) * cols + c * POOL + dc]
                            for dr in range(POOL) for dc in range(POOL))
                pixels.append(round(total / (POOL * POOL * 255), 3))
        lines.append(",".join([str(label)] + [format(p, "g") for p in pixels]))
        if all(v >= PER_CLASS for v in taken.values()):
            break

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} rows to {out}")


if __name__ == "__main__":
    main()

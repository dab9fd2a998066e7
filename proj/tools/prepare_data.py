#!/usr/bin/env python3
"""Convert raw dataset dumps into the formats the lossyrbm CLI reads.

  mnist-json  DIR OUT      digits/{0..9}.json ({"data": [784 floats in [0,1], ...]})
                           -> OUT/images-idx3-ubyte, OUT/labels-idx1-ubyte
  pendigits   FILE OUT     comma separated rows, 16 integer features then the digit
                           (UCI pendigits.tra/.tes or KEEL penbased.dat; '@' header lines skipped)
                           -> OUT/pendigits.csv, OUT/pendigits.schema
  arff        FILE OUT N   multi-label ARFF whose last N attributes are the labels
                           (Scene: N = 6) -> OUT/<stem>.csv, OUT/<stem>.schema
"""

import argparse
import json
import struct
import sys
from pathlib import Path


def mnist_json(src: Path, out: Path) -> None:
    images, labels = [], []
    per_class = [json.loads((src / f"{d}.json").read_text())["data"] for d in range(10)]
    n = max(len(c) for c in per_class) // 784
    # interleave classes so a prefix is balanced
    for i in range(n):
        for d in range(10):
            flat = per_class[d]
            if (i + 1) * 784 > len(flat):
                continue
            images.append(bytes(min(255, max(0, round(x * 255))) for x in flat[i * 784:(i + 1) * 784]))
            labels.append(d)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))
    print(f"{len(images)} images -> {out}")


def pendigits(src: Path, out: Path) -> None:
    rows = []
    for line in src.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 17:
            sys.exit(f"{src}: expected 17 columns, got {len(cells)}: {line[:60]}")
        rows.append(cells)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"f{i}" for i in range(16)] + ["digit"]
    with open(out / "pendigits.csv", "w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")
    (out / "pendigits.schema").write_text("* feature\ndigit class\n")
    print(f"{len(rows)} rows -> {out}")


def arff(src: Path, out: Path, n_labels: int) -> None:
    names, rows, in_data = [], [], False
    for line in src.read_text().splitlines():
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        low = s.lower()
        if low.startswith("@attribute"):
            names.append(s.split()[1].strip("'\""))
        elif low.startswith("@data"):
            in_data = True
        elif in_data:
            if s.startswith("{"):
                sys.exit("sparse ARFF rows are not supported")
            rows.append([c.strip() for c in s.split(",")])
    if n_labels <= 0 or n_labels >= len(names):
        sys.exit(f"bad label count {n_labels} for {len(names)} attributes")
    out.mkdir(parents=True, exist_ok=True)
    stem = src.stem
    with open(out / f"{stem}.csv", "w") as f:
        f.write(",".join(names) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")
    schema = ["* feature"] + [f"{n} label" for n in names[-n_labels:]]
    (out / f"{stem}.schema").write_text("\n".join(schema) + "\n")
    print(f"{len(rows)} rows, {len(names) - n_labels} features, {n_labels} labels -> {out}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="cmd", required=True)
    a = sub.add_parser("mnist-json")
    a.add_argument("src", type=Path)
    a.add_argument("out", type=Path)
    b = sub.add_parser("pendigits")
    b.add_argument("src", type=Path)
    b.add_argument("out", type=Path)
    c = sub.add_parser("arff")
    c.add_argument("src", type=Path)
    c.add_argument("out", type=Path)
    c.add_argument("n_labels", type=int)
    args = p.parse_args()
    if args.cmd == "mnist-json":
        mnist_json(args.src, args.out)
    elif args.cmd == "pendigits":
        pendigits(args.src, args.out)
    else:
        arff(args.src, args.out, args.n_labels)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Convert a label-last CSV of 8-bit grayscale images into gzipped IDX files.

Each CSV row holds rows*cols pixel values (0..255) followed by the integer
class label. Used to turn the 5k MNIST sample shipped with mlxtend
(mlxtend/data/data/mnist_5k.csv.gz) into the IDX fixtures under tests/data.

    python3 csv_to_idx.py mnist_5k.csv.gz out/mnist5k --rows 28 --cols 28
"""
import argparse
import gzip
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("prefix")
    ap.add_argument("--rows", type=int, default=28)
    ap.add_argument("--cols", type=int, default=28)
    args = ap.parse_args()

    opener = gzip.open if args.csv.endswith(".gz") else open
    images, labels = bytearray(), bytearray()
    count = 0
    with opener(args.csv, "rt") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = [int(float(v)) for v in line.split(",")]
            pixels, label = fields[:-1], fields[-1]
            if len(pixels) != args.rows * args.cols:
                raise SystemExit(f"row {count}: expected {args.rows * args.cols} pixels, got {len(pixels)}")
            images.extend(bytes(pixels))
            labels.append(label)
            count += 1

    # mtime=0 keeps the gzip bytes reproducible
    with gzip.GzipFile(args.prefix + "-images-idx3-ubyte.gz", "wb", mtime=0) as out:
        out.write(struct.pack(">IIII", 0x00000803, count, args.rows, args.cols))
        out.write(images)
    with gzip.GzipFile(args.prefix + "-labels-idx1-ubyte.gz", "wb", mtime=0) as out:
        out.write(struct.pack(">II", 0x00000801, count))
        out.write(labels)
    print(f"wrote {count} images")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Convert SVHN cropped-digit .mat containers to the record layout.

Reads train_32x32.mat / test_32x32.mat and writes svhn_train.bin /
svhn_test.bin (see docs/svhn-conversion.md).  Requires scipy.
"""

import argparse
from pathlib import Path

import numpy as np
from scipy.io import loadmat

from triplenet.data import write_record_file


def convert(mat_path: Path, out_path: Path) -> int:
    blob = loadmat(mat_path)
    images = blob["X"]          # (32, 32, 3, N) uint8
    labels = blob["y"].ravel().astype(np.int64)
    labels[labels == 10] = 0    # SVHN stores digit zero as class 10
    images = np.ascontiguousarray(images.transpose(3, 2, 0, 1))
    write_record_file(out_path, images, labels.astype(np.uint8))
    return images.shape[0]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in-dir", required=True,
                        help="directory with train_32x32.mat / test_32x32.mat")
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args()
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for mat_name, bin_name in (("train_32x32.mat", "svhn_train.bin"),
                               ("test_32x32.mat", "svhn_test.bin")):
        n = convert(in_dir / mat_name, out_dir / bin_name)
        print(f"{bin_name}: {n} records")


if __name__ == "__main__":
    main()

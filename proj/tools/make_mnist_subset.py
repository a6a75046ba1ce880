#!/usr/bin/env python3
# Copyright 2026 The fedval Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the 5000-sample MNIST subset shipped inside the mlxtend wheel as IDX.

Usage:
  pip download --no-deps -d /tmp/wheels mlxtend
  python3 tools/make_mnist_subset.py /tmp/wheels/mlxtend-*.whl data/mnist5k

Produces images.idx3-ubyte / labels.idx1-ubyte (all 5000 records, in the
wheel's order). The experiment pipeline splits train/test by seed.
"""

import gzip
import pathlib
import struct
import sys
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    wheel, out_dir = sys.argv[1], pathlib.Path(sys.argv[2])
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read(MEMBER)).decode()
    rows = [line.split(",") for line in text.strip().split("\n")]
    # 784 pixel columns followed by the label.
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            raise ValueError(f"expected 785 columns, got {len(row)}")
        pixels.extend(int(v) for v in row[:784])
        labels.append(int(row[784]))
    n = len(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels)
    with open(out_dir / "labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} records to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

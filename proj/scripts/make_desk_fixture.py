#!/usr/bin/env python3
# Copyright 2026 The hslmu Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the small IDX fixture used by the desk-scale training run.

The source is the `mnist` npm package (github.com/cazala/mnist), which ships
10k MNIST digits as JSON arrays of pixel/255 rounded to three decimals. Those
round back to the original bytes exactly. Digits of the requested classes are
shuffled with a fixed seed and written as two gzipped IDX pairs:

    desk-train-images-idx3-ubyte.gz / desk-train-labels-idx1-ubyte.gz
    desk-t10k-images-idx3-ubyte.gz  / desk-t10k-labels-idx1-ubyte.gz

Usage:
    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/make_desk_fixture.py package/src/digits tests/data
"""

import argparse
import gzip
import json
import pathlib
import random
import struct


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archive bytes reproducible.
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        gz.write(header + bytes(payload))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--classes", default="0,1,2")
    parser.add_argument("--train", type=int, default=2400)
    parser.add_argument("--seed", type=int, default=20200101)
    args = parser.parse_args()

    samples = []
    for c in (int(s) for s in args.classes.split(",")):
        data = json.loads((args.digits_dir / f"{c}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            pixels = [round(v * 255) for v in data[i * 784:(i + 1) * 784]]
            assert all(0 <= p <= 255 for p in pixels)
            samples.append((pixels, c))

    random.Random(args.seed).shuffle(samples)
    splits = {"desk-train": samples[:args.train], "desk-t10k": samples[args.train:]}
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for prefix, items in splits.items():
        images = [p for pixels, _ in items for p in pixels]
        labels = [c for _, c in items]
        write_idx(args.out_dir / f"{prefix}-images-idx3-ubyte.gz", 0x803, [len(items), 28, 28], images)
        write_idx(args.out_dir / f"{prefix}-labels-idx1-ubyte.gz", 0x801, [len(items)], labels)
        print(prefix, len(items))


if __name__ == "__main__":
    main()

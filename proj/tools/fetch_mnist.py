#!/usr/bin/env python3
# Copyright 2026 The fuleak Authors.
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

"""Build MNIST IDX files from the digits bundled with the npm `mnist` package.

The package ships 10,000 real MNIST digits as JSON float arrays (values are
pixel/255 rounded to three decimals). They are re-quantized to bytes, shuffled
with a fixed seed, and written as an 8,000-image train split and a 2,000-image
test split in the standard IDX layout.
"""
import argparse
import json
import os
import random
import struct
import subprocess
import tarfile
import tempfile


def write_idx(prefix, images, labels):
    with open(prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    ap.add_argument("--tarball", help="existing mnist-*.tgz; fetched with `npm pack` when omitted")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        tgz = args.tarball
        if tgz is None:
            name = subprocess.check_output(["npm", "pack", "mnist@1.1.0"], cwd=tmp, text=True).strip().splitlines()[-1]
            tgz = os.path.join(tmp, name)
        with tarfile.open(tgz) as tar:
            tar.extractall(tmp)
        samples = []
        for digit in range(10):
            with open(os.path.join(tmp, "package", "src", "digits", f"{digit}.json")) as f:
                flat = json.load(f)["data"]
            for i in range(len(flat) // 784):
                px = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
                samples.append((px, digit))

    random.Random(1998).shuffle(samples)
    train, test = samples[:8000], samples[8000:]
    write_idx(os.path.join(args.out, "train"), [s[0] for s in train], [s[1] for s in train])
    write_idx(os.path.join(args.out, "t10k"), [s[0] for s in test], [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()

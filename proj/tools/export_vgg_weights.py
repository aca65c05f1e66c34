# Copyright (c) 2026 The pynet-cpp Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Exports torchvision VGG-19 weights into the PYNETFX1 archive format.

Usage:
    python3 tools/export_vgg_weights.py --out vgg19.fx

The resulting file is what `pynet train --extractor` (or the
PYNET_FX_WEIGHTS environment variable) consumes for the perceptual loss.
"""

import argparse
import json
import struct
import sys

# conv layer index in torchvision vgg19().features -> canonical name.
VGG19_CONVS = [
    (0, "conv1_1"), (2, "conv1_2"),
    (5, "conv2_1"), (7, "conv2_2"),
    (10, "conv3_1"), (12, "conv3_2"), (14, "conv3_3"), (16, "conv3_4"),
    (19, "conv4_1"), (21, "conv4_2"), (23, "conv4_3"), (25, "conv4_4"),
    (28, "conv5_1"), (30, "conv5_2"), (32, "conv5_3"), (34, "conv5_4"),
]
POOL_BEFORE = {"conv2_1", "conv3_1", "conv4_1", "conv5_1"}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output archive path")
    args = parser.parse_args()

    try:
        import numpy as np
        import torchvision
    except ImportError as exc:
        print(f"error: torchvision and numpy are required: {exc}", file=sys.stderr)
        return 1

    features = torchvision.models.vgg19(weights="IMAGENET1K_V1").features

    layers_meta = []
    tensor_meta = []
    blobs = []
    offset = 0
    for idx, name in VGG19_CONVS:
        conv = features[idx]
        # torch stores [Cout, Cin, k, k]; the archive wants [k, k, Cin, Cout].
        w = conv.weight.detach().numpy().transpose(2, 3, 1, 0).astype("<f4")
        b = conv.bias.detach().numpy().astype("<f4")
        layers_meta.append({"name": name, "pool_before": name in POOL_BEFORE})
        for suffix, arr in ((".w", w), (".b", b)):
            raw = np.ascontiguousarray(arr).tobytes()
            tensor_meta.append({
                "name": name + suffix,
                "dtype": "f32",
                "shape": list(arr.shape),
                "offset": offset,
                "bytes": len(raw),
            })
            blobs.append(raw)
            offset += len(raw)

    header = json.dumps({
        "meta": {
            "format": "pynet-fx-v1",
            "mean": [123.68, 116.779, 103.939],
            "input_scale": 255.0,
            "layers": layers_meta,
        },
        "tensors": tensor_meta,
    }).encode("utf-8")

    with open(args.out, "wb") as out:
        out.write(b"PYNETFX1")
        out.write(struct.pack("<Q", len(header)))
        out.write(header)
        for raw in blobs:
            out.write(raw)
    print(f"wrote {args.out}: {len(tensor_meta)} tensors, {offset} payload bytes")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

#!/usr/bin/env python3
"""Writes the golden wire frames with struct.pack, independently of the Rust encoder.

Frame: u32 body length | u8 tag | u32 round | u32 client id |
       [u64 dataset size, LocalUpdate only] | u32 rows | u32 cols | rows*cols f64,
all little-endian, payload row-major. Vectors are rows x 1.
"""
import os
import struct

HERE = os.path.dirname(os.path.abspath(__file__))


def frame(tag, rnd, client, rows, cols, values, size=None):
    assert len(values) == rows * cols
    body = struct.pack("<BII", tag, rnd, client)
    if size is not None:
        body += struct.pack("<Q", size)
    body += struct.pack("<II", rows, cols)
    body += struct.pack("<%dd" % len(values), *values)
    return struct.pack("<I", len(body)) + body


FRAMES = {
    "broadcast_plain": frame(1, 0, 0, 3, 1, [1.5, -2.0, 0.25]),
    "broadcast_encoded": frame(2, 3, 0, 4, 1, [0.1, 1e300, -0.0, 7.0]),
    "broadcast_doubly_encoded": frame(3, 5, 0, 2, 3, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
    "local_update": frame(4, 2, 7, 2, 1, [0.5, 0.5], size=6000),
    "aggregate_vector": frame(5, 9, 0, 3, 1, [-1.0, 5e-324, 2.5]),
    "aggregate_matrix": frame(5, 9, 0, 3, 2, [1.0, -1.0, 0.5, -0.5, 0.125, 1e-3]),
    "done": frame(6, 20, 0, 2, 1, [3.0, 1.0]),
}

if __name__ == "__main__":
    for name, data in FRAMES.items():
        with open(os.path.join(HERE, name + ".bin"), "wb") as f:
            f.write(data)

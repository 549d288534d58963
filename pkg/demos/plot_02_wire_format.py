"""
The wire format
===============

Only coordinates flagged by the indicator travel, at two bits each, after
a 32-bit scale and a one-bit-per-coordinate bitmap.
"""

import numpy as np

from qadagrad import IndicatorBitmap, TernaryGradient, decode, dense_float_bits, encode, payload_bits

codes = np.array([0, -1, 0, 0, 1, 0, 0, 0], dtype=np.int8)
q = TernaryGradient(0.5, codes)
indicator = IndicatorBitmap(codes != 0)

msg = encode(q, indicator)
raw = msg.to_bytes()
# 8 header bytes (dim, scale) then 8 bitmap bits and two 2-bit codes
print(raw.hex(" "))
print("payload bits", payload_bits(msg))
print("decoded", decode(raw).dense())

# at realistic sizes the bitmap dominates once few coordinates are selected
d = 47236
for k in (d, d // 10, d // 100):
    bits = 32 + d + 2 * k
    print(f"k={k:6d}  {bits:7d} bits  {100 * bits / dense_float_bits(d):5.2f}% of float32")

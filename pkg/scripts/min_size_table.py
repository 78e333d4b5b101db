"""Minimum detectable object side for common strides and IoU thresholds."""
from anchorcov.geometry import min_detectable_size

print("stride,t=0.3,t=0.5,t=0.7")
for d in (4, 8, 16, 32):
    print(f"{d}," + ",".join(f"{min_detectable_size(d, t):.3f}" for t in (0.3, 0.5, 0.7)))

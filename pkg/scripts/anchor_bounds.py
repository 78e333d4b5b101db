"""Perfect-classifier MABO bounds for the anchor presets on a synthetic logo-like corpus.

    python3 scripts/anchor_bounds.py --images 500 --seed 0
"""
import argparse

from anchorcov.anchors import preset
from anchorcov.coverage import evaluate_grid
from anchorcov.synthetic import synthetic_dataset

ROWS = [
    ("A_orig", 16),
    ("A_ext", 16),
    ("A_prop", 16),
    ("A_prop", None),  # conv3/conv4/conv5 strides 4/8/16
]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--images", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    ds = synthetic_dataset(args.images, seed=args.seed)
    print("anchors,strides,mabo,recall")
    for name, stride in ROWS:
        rep = evaluate_grid(ds, preset(name), flat_stride=stride, threads=args.threads)
        strides = f"{stride}" if stride else "4/8/16"
        print(f"{name},{strides},{rep.mabo:.6f},{rep.recall:.6f}")


if __name__ == "__main__":
    main()

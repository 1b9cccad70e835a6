"""Batched vs sequential label matching at a few problem sizes.

The largest default shape is the 10k sentences x 1k labels x 1024 dims case.
"""
import argparse
import json

from lagamc.matcher import benchmark

SHAPES = [(1_000, 100, 256), (5_000, 500, 512), (10_000, 1_000, 1_024)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="skip the largest shape")
    args = ap.parse_args()

    shapes = SHAPES[:-1] if args.quick else SHAPES
    rows = []
    for n_s, n_l, dim in shapes:
        res = benchmark(n_s, n_l, dim, seed=args.seed, repeats=args.repeats)
        rows.append(res)
        print(f"{n_s:>6} x {n_l:>5} x {dim:>5}  batched {res['batched_seconds']:8.3f}s  "
              f"sequential {res['sequential_seconds']:8.2f}s  speedup {res['speedup']:7.1f}x  "
              f"agree={res['outputs_agree']}")
    print(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()

"""Full model vs. max-only pooling, no-SE and single-map heads over several seeds.

Prints one row per (variant, seed) and a mean-AUC summary.  Pass ``--out`` to
also write the rows as CSV.
"""

import argparse
import sys

import numpy as np

from weakmap.config import RunConfig
from weakmap.experiment import VARIANTS, run


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=list(VARIANTS))
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", help="CSV path for per-run rows")
    args = ap.parse_args(argv)
    base = RunConfig().override(dict(item.split("=", 1) for item in args.set))

    rows = ["variant,seed,mean_auc,mean_pointing,train_seconds"]
    aucs: dict[str, list[float]] = {}
    for variant in args.variants:
        for seed in args.seeds:
            cfg = base.override({**VARIANTS[variant], "seed": seed})
            out = run(cfg)
            pointing = np.mean([p for p in out.report.pointing if p is not None])
            rows.append(f"{variant},{seed},{out.report.mean_auc!r},{pointing!r},{out.train_seconds:.1f}")
            print(rows[-1], flush=True)
            aucs.setdefault(variant, []).append(out.report.mean_auc)

    print()
    for variant, vals in aucs.items():
        print(f"{variant:<11} mean AUC {np.mean(vals):.4f} over seeds {args.seeds}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    sys.exit(main())

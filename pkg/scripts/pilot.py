"""Single end-to-end run on the synthetic task, printing the epoch log and the
final ten-crop AUC / pointing report."""

import argparse
import logging
import sys

from weakmap.config import RunConfig
from weakmap.experiment import run


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = cfg.override(dict(item.split("=", 1) for item in args.set))
    out = run(cfg, log_stream=sys.stdout)
    print(f"train {out.train_seconds:.1f}s eval {out.eval_seconds:.1f}s best epoch {out.result.best_epoch}")
    print(out.report.text(), end="")


if __name__ == "__main__":
    main()

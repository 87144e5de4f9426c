"""Toy unit comparison: synthesize the corpus, train one model per unit kind,
decode with beam search and write a CER table to <work>/report.md.

    python3 scripts/run_toy_experiment.py --work runs/toy --kinds character word
"""

import argparse
import logging

from unitasr.config import parse_overrides
from unitasr.experiment import TOY_CONFIG, run_toy_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--work", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--kinds", nargs="+", default=["character", "word"],
                    choices=["character", "word", "subword"])
    ap.add_argument("--n-train", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=20)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help=f"override a toy setting (keys: {', '.join(sorted(TOY_CONFIG))}, speed_perturb)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    results = run_toy_comparison(args.work, seed=args.seed, kinds=tuple(args.kinds),
                                 overrides=parse_overrides(args.overrides),
                                 n_train=args.n_train, n_test=args.n_test)
    for r in results:
        print(f"{r.unit_kind}\t{r.model_label}\tCER {r.cer:.2f}\t{r.seconds:.0f}s")


if __name__ == "__main__":
    main()

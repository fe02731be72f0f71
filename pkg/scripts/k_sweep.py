"""Train one generator per k and score it beside the robust cases.

    python scripts/k_sweep.py --k 0.6 0.8 1.0 --epochs 20 --out k_sweep.csv
"""

import argparse

from oascen.evalharness import write_case_table
from oascen.experiments import k_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=float, nargs="+", default=[0.6, 0.8, 1.0])
    ap.add_argument("--days", type=int, default=40)
    ap.add_argument("--test", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="k_sweep.csv")
    args = ap.parse_args()
    rows = k_sweep(args.k, n_days=args.days, n_test=args.test, epochs=args.epochs, seed=args.seed)
    write_case_table(args.out, rows)
    for m in rows:
        print(f"{m.case_id:>16}  C_total={m.c_total:14.2f}  I+={m.i_up:.3f}  I-={m.i_dn:.3f}"
              f"  infeasible={m.n_infeasible}")


if __name__ == "__main__":
    main()

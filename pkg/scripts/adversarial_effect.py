"""Mean generated cost at k=0.8 versus k=1 across seeds.

    python scripts/adversarial_effect.py --seeds 10 --out effect.csv
"""

import argparse
import csv

from oascen.experiments import adversarial_effect


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--k", type=float, default=0.8)
    ap.add_argument("--days", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--out", default="adversarial_effect.csv")
    args = ap.parse_args()
    rows = adversarial_effect(range(args.seeds), k_adv=args.k, n_days=args.days, epochs=args.epochs)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "k", "cost_k", "cost_k1", "k_wins"))
        for r in rows:
            w.writerow((r.seed, args.k, repr(r.cost_adv), repr(r.cost_ref), int(r.adversarial_wins)))
    wins = sum(r.adversarial_wins for r in rows)
    print(f"k={args.k} produced the costlier scenarios in {wins}/{len(rows)} seeds")


if __name__ == "__main__":
    main()

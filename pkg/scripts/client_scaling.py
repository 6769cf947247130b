"""Final accuracy against the number of clients with a fixed per-client shard size."""

import argparse
import csv
import sys

import numpy as np

from cryptoqfl.fedsim import FedConfig, sweep_clients


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--counts", default="2,5,10,20")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--rounds", type=int, default=60)
    args = p.parse_args()
    counts = [int(c) for c in args.counts.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = sweep_clients(FedConfig(rounds=args.rounds), counts, seeds)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n_clients", "mean_accuracy", "std_accuracy", "mean_loss"])
    for n in counts:
        acc = [r["final_accuracy"] for r in rows if r["n_clients"] == n]
        loss = [r["final_loss"] for r in rows if r["n_clients"] == n]
        w.writerow([n, f"{np.mean(acc):.4f}", f"{np.std(acc):.4f}", f"{np.mean(loss):.4f}"])


if __name__ == "__main__":
    main()

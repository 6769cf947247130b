"""Per-step share of modeled round latency for the baseline and cryptoqfl workflows."""

import argparse
import csv
import sys
from dataclasses import replace

from cryptoqfl.fedsim import STEPS, FedConfig, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--clients", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    base = FedConfig(rounds=args.rounds, n_clients=args.clients, seed=args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["workflow", "step", "latency_units", "share", "bytes_up_per_client"])
    for wf in ("baseline", "cryptoqfl"):
        res = run_experiment(replace(base, workflow=wf))
        totals = res.summary()["latency_breakdown"]
        grand = sum(totals.values())
        up = sum(sum(m.bytes_up.values()) for m in res.rounds) / (args.clients * args.rounds)
        for step in STEPS:
            w.writerow([wf, step, f"{totals[step]:g}", f"{totals[step] / grand:.4f}", f"{up:.1f}"])


if __name__ == "__main__":
    main()

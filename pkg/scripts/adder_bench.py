"""Gate counts, cost and latency of the adder for a range of widths."""

import argparse
import csv
import sys

from cryptoqfl.aggadder import MAX_WIDTH, MIN_WIDTH, GateCostModel, build_adder, verify_exhaustive


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--max-width", type=int, default=6)
    args = p.parse_args()
    model = GateCostModel()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["width", "qubits", "cx", "ccx", "cost", "latency", "exhaustive_ok"])
    for width in range(MIN_WIDTH, min(args.max_width, MAX_WIDTH) + 1):
        a = build_adder(width)
        ok = not verify_exhaustive(a)
        w.writerow([width, a.counts["qubits"], a.counts["cx"], a.counts["ccx"],
                    f"{model.circuit_cost(a.circuit):g}", f"{model.circuit_latency(a.circuit):g}", ok])


if __name__ == "__main__":
    main()

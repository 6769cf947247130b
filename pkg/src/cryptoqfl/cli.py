"""Command line entry point: ``train``, ``bench-adder`` and ``verify``.

Exit code 0 means every check in the invoked command passed. Otherwise the
exit code is non-zero and a JSON failure report goes to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .aggadder import (
    MAX_WIDTH, MIN_WIDTH, REFERENCE_WIDTH, GateCostModel, build_adder, comparison_csv,
    report_comparison, verify_exhaustive,
)
from .fedsim import WORKFLOWS, FedConfig, FedError, run_experiment
from .suites import SUITES

EXIT_FAIL = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


def _fed_fields() -> dict[str, type]:
    casts = {"int": int, "float": float, "str": str}
    return {f.name: casts[f.type] for f in dataclasses.fields(FedConfig)}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: the simulation config plus seeds and output directory."""

    fed: FedConfig = field(default_factory=FedConfig)
    seeds: tuple[int, ...] = (0,)
    out: str = "runs/default"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "ExperimentConfig":
        fed_types = _fed_fields()
        fed, seeds, out = {}, (0,), cls.out
        for key, raw in values.items():
            if key == "seeds":
                seeds = _parse_seeds(raw)
            elif key == "out":
                out = raw
            elif key in fed_types:
                try:
                    fed[key] = fed_types[key](raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {raw!r}") from exc
            else:
                raise ConfigError(f"unknown config key: {key}")
        try:
            return cls(FedConfig(**fed), seeds, out)
        except FedError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict[str, str]:
        out = {k: str(v) for k, v in dataclasses.asdict(self.fed).items()}
        out["seeds"] = ",".join(map(str, self.seeds))
        out["out"] = self.out
        return out


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in raw.replace(" ", "").split(",") if s)
    except ValueError as exc:
        raise ConfigError(f"bad seeds: {raw!r}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        values[key] = value
    return values


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return ExperimentConfig.from_mapping(values)


def _fail(command: str, failures: list, **extra) -> int:
    report = {"command": command, "ok": False, "failures": failures, **extra}
    print(json.dumps(report, indent=2), file=sys.stderr)
    return EXIT_FAIL


def cmd_train(config: ExperimentConfig, trace: bool = False) -> int:
    root = Path(config.out)
    runs = []
    for seed in config.seeds:
        fed = dataclasses.replace(config.fed, seed=seed)
        start = time.perf_counter()
        result = run_experiment(fed)
        out = root if len(config.seeds) == 1 else root / f"seed_{seed}"
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(result.metrics_csv())
        summary = {**result.summary(), "seed": seed, "workflow": fed.workflow, "task": fed.task,
                   "wall_seconds": round(time.perf_counter() - start, 3)}
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        if trace:
            (out / "key_trace.txt").write_text(result.key_trace)
            print(result.key_trace, end="")
        runs.append(summary)
        print(f"seed {seed}: final_accuracy={summary['final_accuracy']:.4f} -> {out}")
    if len(config.seeds) > 1:
        index = {"seeds": list(config.seeds), "runs": runs,
                 "mean_final_accuracy": sum(r["final_accuracy"] for r in runs) / len(runs)}
        (root / "summary.json").write_text(json.dumps(index, indent=2) + "\n")
    (root / "config.cfg").write_text("".join(f"{k} = {v}\n" for k, v in config.to_mapping().items()))
    return 0


def parse_width_range(text: str) -> list[int]:
    lo, _, hi = text.partition("-")
    try:
        widths = list(range(int(lo), int(hi or lo) + 1))
    except ValueError as exc:
        raise ConfigError(f"bad width range: {text!r}") from exc
    if not widths or widths[0] < MIN_WIDTH or widths[-1] > MAX_WIDTH:
        raise ConfigError(f"widths must lie in [{MIN_WIDTH}, {MAX_WIDTH}]")
    return widths


def cmd_bench_adder(widths: list[int], model: GateCostModel | None = None,
                    out: str | Path | None = None) -> int:
    """Exhaustive verification per width plus the comparison table.

    Fails on any incorrect sum, and on any mismatch between the reference-width
    circuit and its published counts. Mismatches in the other schemes' rows are
    printed as notes only.
    """
    model = model or GateCostModel()
    failures, notes, chunks = [], [], []
    for w in widths:
        start = time.perf_counter()
        bad = verify_exhaustive(build_adder(w))
        if bad:
            failures.append({"width": w, "kind": "incorrect", "cases": bad[:20], "count": len(bad)})
        rows, flags = report_comparison(model, w)
        for flag in flags:
            if flag.startswith("Ours"):
                failures.append({"width": w, "kind": "count_mismatch", "detail": flag})
            elif flag not in notes:
                notes.append(flag)
        chunks.append((w, rows, time.perf_counter() - start))
    text = "width," + comparison_csv(chunks[0][1]).splitlines()[0] + "\n"
    for w, rows, _ in chunks:
        body = comparison_csv(rows).splitlines()[1:]
        text += "".join(f"{w},{line}\n" for line in body if line.startswith("Ours") or w == widths[0])
    print(text, end="")
    for note in notes:
        print(f"note: {note}")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "adder_comparison.csv").write_text(text)
    if REFERENCE_WIDTH not in widths:
        print(f"note: published counts are checked at width {REFERENCE_WIDTH} only")
    if failures:
        return _fail("bench-adder", failures, widths=widths)
    return 0


def cmd_verify(suite: str, seed: int = 0) -> int:
    result = SUITES[suite](seed=seed)
    report = result.report()
    print(json.dumps(report))
    if not result.ok:
        return _fail("verify", result.failures, suite=suite)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cryptoqfl")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a federated experiment")
    t.add_argument("--config", help="flat key=value config file")
    t.add_argument("--seed", type=int, help="run a single seed")
    t.add_argument("--out", help="output directory")
    t.add_argument("--workflow", choices=WORKFLOWS)
    t.add_argument("--clients", type=int)
    t.add_argument("--trace", action="store_true", help="dump the adder key trace")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")

    b = sub.add_parser("bench-adder", help="verify the adder and print the comparison table")
    b.add_argument("--w", default=str(REFERENCE_WIDTH), help="width or range such as 2-4")
    b.add_argument("--config", help="config file for cost-model overrides")
    b.add_argument("--out", help="directory for the CSV")

    v = sub.add_parser("verify", help="run a standalone verification suite")
    v.add_argument("--suite", choices=sorted(SUITES), required=True)
    v.add_argument("--seed", type=int, default=0)
    return p


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.seed is not None:
        out["seeds"] = str(args.seed)
    if args.out:
        out["out"] = args.out
    if args.workflow:
        out["workflow"] = args.workflow
    if args.clients is not None:
        out["n_clients"] = str(args.clients)
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(load_config(args.config, _overrides(args)), trace=args.trace)
        if args.command == "bench-adder":
            fed = load_config(args.config).fed if args.config else FedConfig()
            return cmd_bench_adder(parse_width_range(args.w), fed.gate_model(), args.out)
        return cmd_verify(args.suite, args.seed)
    except (ConfigError, FedError) as exc:
        print(json.dumps({"command": args.command, "ok": False, "error": str(exc)}), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: run experiments, sweeps, cost reports, training demo."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .contract import HyperParams
from .economics import (
    PHASE_OPS,
    eth_fiat,
    phase_gas,
    polygon_fiat,
    run_cost_report,
    usd_cost,
)
from .harness import (
    ExperimentConfig,
    SWEEP_AXES,
    apply_axis,
    naive_baseline,
    run_fl_demo,
    run_single,
    run_sweep,
    sweep_rows,
    write_csv,
)
from .simchain import ChainParams, InvariantViolation
from .workload import WorkloadConfig


def parse_scaled_int(text: str) -> int:
    """Accept plain ints or power-of-two notation like 2^253."""
    text = text.strip()
    if "^" in text:
        base, _, exp = text.partition("^")
        return int(base) ** int(exp)
    return int(text)


def parse_values(axis: str, text: str) -> list:
    parts = [p for p in text.split(",") if p.strip()]
    if axis == "freq":
        return [float(p) for p in parts]
    return [parse_scaled_int(p) for p in parts]


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    hyper_kw = dict(raw.get("hyper", {}))
    for key in ("difficulty", "training_difficulty"):
        if isinstance(hyper_kw.get(key), str):
            hyper_kw[key] = parse_scaled_int(hyper_kw[key])
    return ExperimentConfig(
        label=raw.get("label", "default"),
        seed=raw.get("seed", 42),
        n_nodes=raw.get("n_nodes", 21),
        repetitions=raw.get("repetitions", 10),
        workload=WorkloadConfig(**raw.get("workload", {})),
        hyper=HyperParams(**hyper_kw),
        chain=ChainParams(**raw.get("chain", {})),
    )


def base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.label is not None:
        cfg = replace(cfg, label=args.label)
    if getattr(args, "reps", None) is not None:
        cfg = replace(cfg, repetitions=args.reps)
    if getattr(args, "nodes", None) is not None:
        cfg = replace(cfg, n_nodes=args.nodes)
    wl = {}
    if getattr(args, "freq", None) is not None:
        wl["freq"] = args.freq
    if getattr(args, "requests", None) is not None:
        wl["n_requests"] = args.requests
    if getattr(args, "qtimeout", None) is not None:
        wl["timeout_default"] = args.qtimeout
    if wl:
        cfg = replace(cfg, workload=replace(cfg.workload, **wl))
    hp = {}
    if getattr(args, "quorum", None) is not None:
        hp["commit_quorum"] = args.quorum
        hp["reveal_quorum"] = min(cfg.hyper.reveal_quorum, args.quorum)
    if getattr(args, "difficulty", None) is not None:
        hp["difficulty"] = parse_scaled_int(args.difficulty)
    if hp:
        cfg = replace(cfg, hyper=replace(cfg.hyper, **hp))
    return cfg


def out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def maybe_render(args, kind: str, csv_path: Path) -> None:
    if not getattr(args, "render", False):
        return
    try:
        from crplots.figures import render, spec_for
    except ImportError:
        print("note: plotting package not installed; skipping figure render", file=sys.stderr)
        return
    img = csv_path.with_suffix(".svg")
    render(spec_for(kind, str(csv_path), str(img)))
    print(f"wrote {img}")


# -- subcommands ------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = base_config(args)
    result = run_single(cfg, until=args.until, keep=args.export_log is not None)
    print(f"blocks:            {result.blocks}")
    print(f"tasks completed:   {result.tasks_completed}")
    print(f"tasks per second:  {result.tasks_per_second:.4f}")
    print(f"timeouts:          {result.timeouts}")
    print(
        "latency (blocks):  "
        f"min={result.latency_min} avg={result.latency_avg:.3f} max={result.latency_max}"
    )
    print(f"total gas:         {result.total_gas}")
    print(f"assets conserved:  {result.conserved}")
    if args.naive:
        naive = naive_baseline(cfg)
        ratio = result.tasks_per_second / naive if naive else float("inf")
        print(f"naive tasks/s:     {naive:.4f}")
        print(f"speedup:           {ratio:.1f}x")
    if args.export_log:
        result.log.export(args.export_log)
        print(f"wrote {args.export_log}")
    if args.csv:
        rows = sweep_rows(cfg, "freq", cfg.workload.freq, [result])
        write_csv(args.csv, rows)
        print(f"wrote {args.csv}")
    if not result.conserved:
        raise InvariantViolation("asset conservation violated")
    return 0


def cmd_sweep(args) -> int:
    cfg = base_config(args)
    values = parse_values(args.axis, args.values)
    path = out_dir(args) / f"sweep_{args.axis}.csv"
    run_sweep(cfg, args.axis, values, out_path=str(path))
    print(f"wrote {path}")
    kind = {"freq": "freq", "quorum": "qc", "difficulty": "qc", "timeout": "timeout"}[args.axis]
    maybe_render(args, kind, path)
    return 0


def cmd_cost(args) -> int:
    eth = eth_fiat()
    matic = polygon_fiat()
    print("phase gas (avg per accepted op):")
    for phase in PHASE_OPS:
        gas = phase_gas(phase)
        print(
            f"  {phase:8s} {gas:10d} gas"
            f"  ${usd_cost(gas, eth):9.3f} (eth)"
            f"  ${usd_cost(gas, matic):7.4f} (polygon)"
        )
    cfg = base_config(args)
    wl = replace(cfg.workload, freq=0.05, n_requests=args.requests or 8)
    result = run_single(replace(cfg, workload=wl), keep=True)
    rows = run_cost_report(result.log)
    path = out_dir(args) / "cost.csv"
    write_csv(
        str(path),
        [[r["request_id"], r["phase"], r["gas"], r["usd_eth"], r["usd_polygon"]] for r in rows],
        header=["request_id", "phase", "gas", "usd_eth", "usd_polygon"],
    )
    total = result.total_gas
    print(f"simulated {result.tasks_completed} tasks, total gas {total}")
    print(f"  ${usd_cost(total, eth):.3f} (eth)  ${usd_cost(total, matic):.4f} (polygon)")
    print(f"wrote {path}")
    return 0


def cmd_fl_demo(args) -> int:
    path = out_dir(args) / "fl.csv"
    plan, _, _ = run_fl_demo(
        n_nodes=args.nodes or 21,
        rounds=args.rounds,
        dim=args.dim,
        window=args.window,
        seed=args.seed if args.seed is not None else 1,
        lazy_nodes=args.lazy,
        out_path=str(path),
    )
    accepted = [r for r in plan.history if r["accepted"]]
    if not accepted:
        raise InvariantViolation("no training round was accepted")
    first, last = accepted[0], accepted[-1]
    print(f"accepted rounds:     {len(accepted)}")
    print(f"first heldout loss:  {first['heldout_loss']:.6f}")
    print(f"final heldout loss:  {last['heldout_loss']:.6f}")
    print(f"loss ratio:          {last['heldout_loss'] / first['heldout_loss']:.5f}")
    divergent = [r["round"] for r in accepted if r["distinct_states"] != 1]
    print(f"replicas in sync:    {not divergent}")
    print(f"wrote {path}")
    maybe_render(args, "fl", path)
    if divergent:
        raise InvariantViolation(f"replicas diverged in rounds {divergent}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crchain",
        description="Deterministic simulator for committee-verified on-chain inference",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reps=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--label", default=None)
        p.add_argument("--out", default="out", help="output directory")
        if reps:
            p.add_argument("--reps", type=int, default=None, help="repetitions per point")

    p_run = sub.add_parser("run", help="run one simulation and print metrics")
    common(p_run)
    p_run.add_argument("--freq", type=float, default=None)
    p_run.add_argument("--requests", type=int, default=None)
    p_run.add_argument("--nodes", type=int, default=None)
    p_run.add_argument("--quorum", type=int, default=None)
    p_run.add_argument("--difficulty", default=None, help="election threshold, e.g. 2^255")
    p_run.add_argument("--qtimeout", type=int, default=None, help="request queue timeout")
    p_run.add_argument("--until", type=int, default=None, help="fixed block horizon")
    p_run.add_argument("--naive", action="store_true", help="also report inline baseline")
    p_run.add_argument("--export-log", default=None, help="write per-tx event log")
    p_run.add_argument("--csv", default=None, help="write metrics row CSV")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis and write a results CSV")
    common(p_sweep, reps=True)
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p_sweep.add_argument("--values", required=True, help="comma list, e.g. 0.001,0.01 or 2^253")
    p_sweep.add_argument("--freq", type=float, default=None)
    p_sweep.add_argument("--requests", type=int, default=None)
    p_sweep.add_argument("--nodes", type=int, default=None)
    p_sweep.add_argument("--render", action="store_true", help="render figures if plots installed")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cost = sub.add_parser("cost", help="gas and fiat cost report")
    common(p_cost)
    p_cost.add_argument("--requests", type=int, default=None)
    p_cost.set_defaults(func=cmd_cost)

    p_fl = sub.add_parser("fl-demo", help="federated training demonstration")
    common(p_fl)
    p_fl.add_argument("--nodes", type=int, default=None)
    p_fl.add_argument("--rounds", type=int, default=50)
    p_fl.add_argument("--dim", type=int, default=16)
    p_fl.add_argument("--window", type=int, default=4)
    p_fl.add_argument("--lazy", type=int, default=0, help="number of lazy-scoring nodes")
    p_fl.add_argument("--render", action="store_true", help="render figures if plots installed")
    p_fl.set_defaults(func=cmd_fl_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

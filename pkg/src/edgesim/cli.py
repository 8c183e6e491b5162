"""Command line entry point: ``edgesim run | validate-config | replay | dump-workload``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import EdgeSimError
from .metrics import aggregate, write_csv
from .runner import (SWEEP_AXES, ExperimentConfig, output_dir, parse_policy, run_grid, run_offline_cell,
                     run_online_cell)
from .workload import Workload, WorkloadConfig, gen_workload


def _number(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def _load_config(args) -> ExperimentConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if getattr(args, "mode", None):
        d["mode"] = args.mode
    if getattr(args, "policy", None):
        d["policies"] = args.policy
    if getattr(args, "sweep", None):
        axis, _, vals = args.sweep.partition("=")
        d["sweep"] = axis
        d["values"] = [_number(v) for v in vals.split(",") if v]
    if getattr(args, "seeds", None):
        d["seeds"] = args.seeds
    return ExperimentConfig.from_dict(d)


def cmd_run(args) -> int:
    exp = _load_config(args)
    out = output_dir(args.out)
    results = run_grid(exp, out, jobs=args.jobs)
    failed = 0
    for policy, value, seed, metrics, err in results:
        tag = f"{policy} {exp.sweep}={value} seed={seed}" if exp.sweep else f"{policy} seed={seed}"
        if err:
            failed += 1
            print(f"FAIL {tag}: {err}", file=sys.stderr)
        else:
            print(f"ok   {tag}: precision={metrics['avg_precision']:.4f} qoe={metrics['avg_qoe']:.4f} "
                  f"hit={metrics['hit_rate']:.4f} util={metrics['memory_utilization']:.4f}")
    print(f"{len(results) - failed}/{len(results)} cells written under {out}")
    return 1 if failed else 0


def cmd_validate(args) -> int:
    exp = _load_config(args)
    print(json.dumps(exp.to_dict(), indent=2, sort_keys=True))
    print(f"config ok: {len(exp.cells())} cells")
    return 0


def cmd_replay(args) -> int:
    wl = Workload.load(args.scenario)
    args.mode = wl.mode
    exp = _load_config(args)
    seed = wl.config.seed
    policies = args.policy or exp.policies
    out = output_dir(args.out)
    for policy in policies:
        parse_policy(wl.mode, policy)
        run = run_offline_cell if wl.mode == "offline" else run_online_cell
        recs = run(exp, policy, None, seed, f"replay:{Path(args.scenario).stem}", workload=wl)
        path = out / "replay" / policy.replace("/", "-") / f"{seed}.csv"
        write_csv(path, recs)
        m = aggregate(recs)
        print(f"{policy}: precision={m.avg_precision:.4f} qoe={m.avg_qoe:.4f} hit={m.hit_rate:.4f} -> {path}")
    return 0


def cmd_dump(args) -> int:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    wl = gen_workload(WorkloadConfig.from_dict(d), args.mode or "offline")
    wl.dump(args.output)
    print(f"{wl.mode} workload with {wl.n_periods} periods -> {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgesim", description="Edge DNN submodel caching simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_grid=True):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--mode", choices=("offline", "online"))
        sp.add_argument("--policy", action="append", help="policy name, repeatable (suffix /np for no-partition)")
        if with_grid:
            sp.add_argument("--sweep", help=f"AXIS=v1,v2,... with AXIS in {sorted(SWEEP_AXES)}")
            sp.add_argument("--seeds", type=int, nargs="+")

    r = sub.add_parser("run", help="run a policy x sweep x seed grid")
    common(r)
    r.add_argument("--out", help="output directory (default $EDGESIM_OUT or ./out)")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate-config", help="check a config and print it with defaults filled in")
    common(v)
    v.set_defaults(func=cmd_validate)

    rp = sub.add_parser("replay", help="re-run policies on a dumped workload")
    rp.add_argument("--scenario", required=True)
    common(rp, with_grid=False)
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)

    d = sub.add_parser("dump-workload", help="generate a workload and save it for replay")
    d.add_argument("--config", help="workload parameters (JSON)")
    d.add_argument("--mode", choices=("offline", "online"))
    d.add_argument("output")
    d.set_defaults(func=cmd_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EdgeSimError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

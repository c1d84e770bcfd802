"""Command-line pipeline: coverage maps, training, oracles, evaluation.

Every command writes its artifacts plus a ``manifest.json`` into ``--out``.
A relative ``--out`` is resolved under ``$SOLARUAV_OUT_ROOT`` when set.

Exit codes: 0 ok, 2 input error, 3 budget error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__
from .radio import CoverageMap, SizeError, build_coverage_map
from .scenario import ScenarioError, desk_scenario, load_scenario, paper_scenario, save_scenario, scenario_to_dict

EXIT_INPUT, EXIT_BUDGET, EXIT_DIVERGED = 2, 3, 4


class InputError(Exception):
    pass


def _out_dir(arg: str) -> Path:
    out = Path(arg)
    root = os.environ.get("SOLARUAV_OUT_ROOT")
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"scenario file not found: {p}")
    return load_scenario(p)


def _coverage(args, scenario):
    if args.map:
        p = Path(args.map)
        if not p.is_file():
            raise InputError(f"coverage map not found: {p}")
        return CoverageMap.from_csv(p, scenario)
    return build_coverage_map(scenario, seed=args.seed)


def _manifest(out: Path, args, **extra):
    data = {
        "command": args.command,
        "scenario": str(Path(args.scenario).resolve()) if getattr(args, "scenario", None) else None,
        "seed": getattr(args, "seed", None),
        "out": str(out.resolve()),
        "tool_version": __version__,
        "argv": sys.argv[1:],
        "parameters": {},
    }
    if getattr(args, "_scenario_obj", None) is not None:
        data["parameters"]["scenario"] = scenario_to_dict(args._scenario_obj)
    data["parameters"].update(extra)
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True))


def _write_profile(path, profile):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        n = len(profile[0]) if profile else 0
        wr.writerow(["t"] + [f"a{i}" for i in range(n)])
        for t, a in enumerate(profile):
            wr.writerow([t, *a])


def cmd_scenario(args):
    sc = desk_scenario(args.fleet or 3, args.seed) if args.preset == "desk" else paper_scenario(args.fleet or 15, args.seed)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(sc, path)
    print(f"wrote {path}")


def cmd_map(args):
    sc = args._scenario_obj = _scenario(args.scenario)
    out = _out_dir(args.out)
    cmap = build_coverage_map(sc, seed=args.seed, n_jobs=args.jobs)
    cmap.to_csv(out / "coverage_map.csv")
    cmap.placements_to_json(out / "placements.json")
    _manifest(out, args)
    print(f"coverage map: {cmap.horizon} hours x {cmap.fleet_size + 1} fleet shares -> {out}")


def cmd_train(args):
    import torch

    from .env import ChargingEnv, rollout
    from .solvers.ddpg import DdpgHyper, hyper_to_dict, train_ddpg

    torch.set_num_threads(max(1, args.threads))
    sc = args._scenario_obj = _scenario(args.scenario)
    cmap = _coverage(args, sc)
    out = _out_dir(args.out)
    base = DdpgHyper.desk() if args.preset == "desk" else DdpgHyper()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    try:
        hyper = base.with_overrides(**overrides)
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    episodes = args.episodes or hyper.max_episodes

    def progress(ep, log):
        if args.verbose and (ep % 100 == 0 or ep == episodes - 1):
            print(f"episode {ep}: return {log.returns[-1]:.1f}, best eval {log.best_return:.1f}", flush=True)

    policy, log = train_ddpg(lambda: ChargingEnv(sc, cmap), hyper, seed=args.seed, episodes=episodes,
                             callback=progress)
    policy.save(out / "policy.npz")
    log.to_csv(out / "training_log.csv")
    trace = rollout(policy, ChargingEnv(sc, cmap))
    trace.to_csv(out / "trace.csv")
    _manifest(out, args, hyper=hyper_to_dict(hyper), episodes=episodes,
              best_eval_return=log.best_return, best_episode=log.best_episode)
    print(f"best evaluation return {log.best_return:.2f} (episode {log.best_episode}) -> {out}")


def cmd_oracle(args):
    from .solvers.oracles import dp_oracle, exhaustive_oracle

    sc = args._scenario_obj = _scenario(args.scenario)
    cmap = _coverage(args, sc)
    out = _out_dir(args.out)
    if args.mode == "dp":
        res = dp_oracle(sc, cmap, args.bins, rounding=args.rounding)
    else:
        res = exhaustive_oracle(sc, cmap)
    _write_profile(out / "profile.csv", res.profile)
    res.trace.to_csv(out / "trace.csv")
    dp = args.mode == "dp"
    _manifest(out, args, mode=args.mode, bins=args.bins if dp else None,
              rounding=args.rounding if dp else None, value=res.value, true_return=res.true_return)
    print(f"{args.mode} value {res.value:.2f}, profile return {res.true_return:.2f} -> {out}")


def cmd_eval(args):
    from .env import ChargingEnv
    from .solvers.evaluate import evaluate
    from .solvers.greedy import GreedyPolicy

    sc = args._scenario_obj = _scenario(args.scenario)
    cmap = _coverage(args, sc)
    out = _out_dir(args.out)
    if args.policy:
        from .solvers.ddpg import DdpgPolicy

        p = Path(args.policy)
        if not p.is_file():
            raise InputError(f"policy checkpoint not found: {p}")
        policy = DdpgPolicy.load(p)
        if policy.n_uav != sc.fleet_size_N:
            raise InputError(f"policy controls {policy.n_uav} UAVs, scenario has {sc.fleet_size_N}")
        label = str(p)
    else:
        policy = GreedyPolicy(ChargingEnv(sc, cmap))
        label = "greedy"
    m = evaluate(policy, sc, cmap, episodes=args.episodes, seed=args.seed)
    m.episodes_to_csv(out / "metrics.csv")
    m.hourly_to_csv(out / "hourly.csv")
    m.traces[0].to_csv(out / "trace.csv")
    _manifest(out, args, policy=label, episodes=args.episodes, mean_return=m.mean_return,
              harvested_Wh=m.harvested, consumed_Wh=m.consumed)
    print(f"{label}: mean return {m.mean_return:.2f}, sustainability violations {m.sustain_violations}, "
          f"service violations {m.service_violations} -> {out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="solaruav", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scenario", help="write a preset scenario file")
    s.add_argument("--preset", choices=["desk", "paper"], default="desk")
    s.add_argument("--fleet", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="target .toml path")
    s.set_defaults(func=cmd_scenario)

    def common(p, need_map=True):
        p.add_argument("--scenario", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        if need_map:
            p.add_argument("--map", help="coverage_map.csv; built from the scenario when omitted")

    m = sub.add_parser("map", help="build the hourly coverage map")
    common(m, need_map=False)
    m.add_argument("--jobs", type=int, default=1)
    m.set_defaults(func=cmd_map)

    t = sub.add_parser("train", help="train the DDPG scheduler")
    common(t)
    t.add_argument("--episodes", type=int)
    t.add_argument("--preset", choices=["desk", "paper"], default="paper",
                   help="hyperparameter base: paper table values or desk-scale settings")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a hyperparameter")
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("oracle", help="exact DP or exhaustive schedule")
    common(o)
    o.add_argument("--mode", choices=["dp", "exhaustive"], default="dp")
    o.add_argument("--bins", type=int, default=41)
    o.add_argument("--rounding", choices=("floor", "nearest"), default="floor")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("eval", help="evaluate a trained policy or the greedy baseline")
    common(e)
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--policy")
    g.add_argument("--baseline", choices=["greedy"])
    e.add_argument("--episodes", type=int, default=1)
    e.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (InputError, ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SizeError as exc:
        print(f"size error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        from .solvers.ddpg import TrainingDiverged

        if isinstance(exc, TrainingDiverged):
            print(f"training diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        raise
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

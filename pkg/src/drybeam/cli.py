"""Batch front-end: run searches over config grids, compare methods, and
benchmark the rollout cache.

Subcommands
    solve        run rlcbs / greedy / ga / brute per (speed factor, n_b)
    compare      merge result directories into the summary CSV table
    bench-cache  measure environment-step counts with and without the cache
    brute        exact enumeration on a toy instance

Exit codes: 0 success, 2 no feasible result, 3 config error,
4 environment failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .actions import EpisodeConfig, action_label
from .cache import RolloutEngine, step_savings
from .constraints import from_config
from .envs.dryer import DryerParams, PaperDryerEnv, sf_to_vm
from .envs.toy import ToyEnv, ToyEnvSpec, brute_force_optimum, random_toy_policy
from .ga import dryer_evaluator, evolve
from .kvstore import InMemoryStore, NetworkedStore
from .policy import HeuristicPolicy, MlpPolicy, MlpWeights, load_weights
from .search import SearchConfig, greedy_decode, rlcbs_solve

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3
EXIT_ENVIRONMENT = 4

SF_GRID = tuple(round(0.25 + 0.05 * i, 2) for i in range(11))


class ConfigError(ValueError):
    pass


def _load_config(args) -> dict:
    config: dict = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    # Flag overrides beat file values.
    if getattr(args, "method", None):
        config["method"] = args.method
    if getattr(args, "sf", None):
        config["speed_factors"] = [float(x) for x in args.sf.split(",")]
    if getattr(args, "n_beams", None):
        config["n_beams"] = [int(x) for x in args.n_beams.split(",")]
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "output_dir", None):
        config["output_dir"] = args.output_dir
    if getattr(args, "workers", None):
        config["workers"] = args.workers
    if getattr(args, "cache", None):
        config["cache"] = args.cache
    return config


def _make_store(spec: str | None):
    if spec in (None, "memory"):
        return InMemoryStore()
    if spec == "none":
        return None
    host, _, port = str(spec).partition(":")
    if not port:
        raise ConfigError(f"cache address {spec!r} must be 'host:port', 'memory' or 'none'")
    return NetworkedStore(host, int(port))


def _make_policy(config: dict, environment: str, toy_spec: ToyEnvSpec | None):
    spec = config.get("policy", "heuristic")
    if environment == "toy":
        seed = config.get("seed", 0)
        return random_toy_policy(toy_spec, seed)
    if spec == "heuristic":
        return HeuristicPolicy()
    if isinstance(spec, dict) and "weights" in spec:
        return load_weights(spec["weights"])
    if isinstance(spec, dict) and "random_mlp" in spec:
        return MlpPolicy(MlpWeights.random(int(spec["random_mlp"])))
    raise ConfigError(f"unknown policy spec {spec!r}")


def _constraint_specs(config: dict) -> list[dict]:
    spec = config.get("constraints", "dryer_default")
    if spec == "dryer_default":
        from .actions import DEP_ACTIONS, SJR_ACTIONS

        return [
            {"type": "max_count", "actions": list(SJR_ACTIONS), "n": 6},
            {"type": "min_count", "actions": list(DEP_ACTIONS), "n": 3},
            {"type": "temp_continuity"},
        ]
    if spec == "constraint3":
        return [{"type": "temp_continuity"}]
    if spec in ("none", None):
        return []
    return list(spec)


def _result_doc(config: dict, method: str, sf: float | None, result_dict: dict,
                namespace: dict, constraint_specs: list[dict], seed) -> dict:
    doc = dict(result_dict)
    doc.update(
        {
            "method": method,
            "speed_factor": sf,
            "v_m": sf_to_vm(sf) if sf is not None else None,
            "seed": seed,
            "env": namespace,
            "constraints": constraint_specs,
        }
    )
    return doc


def _sanitize(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {key: _sanitize(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(value) for value in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_sanitize(doc), sort_keys=True, indent=2, allow_nan=False)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text + "\n")
    tmp.replace(path)


def cmd_solve(args) -> int:
    config = _load_config(args)
    try:
        method = config.get("method", "rlcbs")
        environment = config.get("environment", "dryer")
        out_dir = Path(config.get("output_dir", "results"))
        seed = config.get("seed", 0)
        workers = int(config.get("workers", 1))
        constraint_specs = _constraint_specs(config)
        constraints, processors = from_config(constraint_specs)
        store = _make_store(config.get("cache", "memory"))

        toy_spec = None
        if environment == "toy":
            toy = config.get("toy", {})
            toy_spec = ToyEnvSpec(
                n_actions=toy.get("n_actions", 4),
                horizon=toy.get("horizon", 6),
                n_contexts=toy.get("n_contexts", 5),
                seed=toy.get("seed", seed),
            )
            env_factory = lambda: ToyEnv(toy_spec)
            speed_factors = [None]
        elif environment == "dryer":
            params = DryerParams.load(config["dryer_params"]) if config.get("dryer_params") else DryerParams.default()
            env_factory = lambda: PaperDryerEnv(params)
            sfs = config.get("speed_factors", "grid")
            speed_factors = list(SF_GRID) if sfs == "grid" else [float(s) for s in sfs]
            for sf in speed_factors:
                if not SF_GRID[0] <= sf <= SF_GRID[-1]:
                    raise ConfigError(
                        f"speed factor {sf} outside the baseline table range "
                        f"[{SF_GRID[0]}, {SF_GRID[-1]}]"
                    )
        else:
            raise ConfigError(f"unknown environment {environment!r}")

        policy = _make_policy(config, environment, toy_spec)
        n_beams_schedule = sorted(int(n) for n in config.get("n_beams", [2]))
        if len(set(n_beams_schedule)) != len(n_beams_schedule):
            raise ConfigError("n_b schedule must be strictly increasing")
        ir_enabled = bool(config.get("ir_enabled", False))
    except (ConfigError, KeyError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    engine = RolloutEngine(env_factory, store)
    any_feasible = False
    try:
        for sf in speed_factors:
            episode = EpisodeConfig(speed_factor=sf, ir_enabled=ir_enabled) if sf is not None else EpisodeConfig()
            cumulative = 0.0
            if method == "greedy":
                t0 = time.perf_counter()
                res = greedy_decode(engine, policy, episode, processors)
                wall = time.perf_counter() - t0
                doc = _result_doc(
                    config,
                    "greedy",
                    sf,
                    {
                        "actions": [action_label(a) for a in res.actions],
                        "reward_kj_per_m2": res.reward if res.feasible else None,
                        "energy_kj_per_m2": res.metrics.get("energy_kj_per_m2"),
                        "n_modules": len(res.actions),
                        "feasible": res.feasible,
                        "timing": {"wall_time_s": wall},
                    },
                    engine.namespace,
                    constraint_specs,
                    seed,
                )
                any_feasible |= res.feasible
                _write_json(out_dir / f"greedy_sf{sf}.json", doc)
            elif method == "rlcbs":
                for n_b in n_beams_schedule:
                    search = SearchConfig(
                        n_beams=n_b,
                        k_mult=int(config.get("k_mult", 2)),
                        include_greedy_seed=bool(config.get("include_greedy_seed", True)),
                        refine=bool(config.get("refine", True)),
                        workers=workers,
                    )
                    res = rlcbs_solve(engine, policy, episode, constraints, processors, search)
                    cumulative += res.wall_time_s
                    doc = _result_doc(config, "rlcbs", sf, res.to_json_dict(), engine.namespace, constraint_specs, seed)
                    doc["timing"]["cumulative_s"] = cumulative
                    any_feasible |= res.feasible
                    _write_json(out_dir / f"rlcbs_sf{sf}_nb{n_b}.json", doc)
            elif method == "ga":
                if environment != "dryer":
                    raise ConfigError("the ga method requires the dryer environment")
                ga_cfg = config.get("ga", {})
                genes = ga_cfg.get("genes", 12)
                if genes == "auto":
                    genes = _incumbent_length(out_dir, sf) or 12
                t0 = time.perf_counter()
                ga_res = evolve(
                    dryer_evaluator(engine, episode),
                    n_genes=int(genes),
                    seed=int(seed),
                    population=int(ga_cfg.get("population", 32)),
                    generations=int(ga_cfg.get("generations", 100)),
                )
                wall = time.perf_counter() - t0
                doc = _result_doc(
                    config,
                    "ga",
                    sf,
                    {
                        "actions": [action_label(a) for a in ga_res.actions()],
                        "reward_kj_per_m2": None,
                        "energy_kj_per_m2": ga_res.best.fitness if ga_res.feasible else None,
                        "n_modules": int(genes),
                        "feasible": ga_res.feasible,
                        "generations": ga_res.generations,
                        "population": ga_res.population,
                        "evaluations": ga_res.evaluations,
                        "timing": {"wall_time_s": wall},
                    },
                    engine.namespace,
                    constraint_specs,
                    seed,
                )
                # GA reward mirrors the search convention: baseline minus energy.
                if ga_res.feasible and sf is not None:
                    from .envs.dryer import sqp_baseline_energy

                    doc["reward_kj_per_m2"] = sqp_baseline_energy(sf) - ga_res.best.fitness
                any_feasible |= ga_res.feasible
                _write_json(out_dir / f"ga_sf{sf}.json", doc)
            elif method == "brute":
                if environment != "toy":
                    raise ConfigError("brute-force method requires the toy environment")
                seq, reward = brute_force_optimum(toy_spec, constraints, processors)
                feasible = bool(seq) or np.isfinite(reward)
                any_feasible |= feasible
                _write_json(
                    out_dir / "brute.json",
                    {"actions": list(seq), "reward": reward if np.isfinite(reward) else None,
                     "feasible": feasible, "toy": toy_spec.to_dict()},
                )
            else:
                print(f"config error: unknown method {method!r}", file=sys.stderr)
                return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # environment/cache failure
        print(f"environment failure: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT

    return EXIT_OK if any_feasible else EXIT_INFEASIBLE


def _incumbent_length(out_dir: Path, sf) -> int | None:
    best_reward, best_len = None, None
    for path in sorted(out_dir.glob(f"rlcbs_sf{sf}_nb*.json")):
        doc = json.loads(path.read_text())
        reward = doc.get("reward_kj_per_m2")
        if doc.get("feasible") and reward is not None:
            if best_reward is None or reward > best_reward:
                best_reward, best_len = reward, doc.get("n_modules")
    return best_len


COMPARE_COLUMNS = [
    "v_m",
    "greedy_R",
    "greedy_time_s",
    "rlcbs_n_b",
    "rlcbs_R",
    "rlcbs_cumul_time_s",
    "rlcbs_n_dryers",
    "ga_R",
    "ga_time_s",
]


def cmd_compare(args) -> int:
    records = []
    for directory in args.results:
        for path in sorted(Path(directory).glob("*.json")):
            doc = json.loads(path.read_text())
            if "method" in doc:
                records.append(doc)
    envs = {json.dumps(doc.get("env"), sort_keys=True) for doc in records}
    if len(envs) > 1:
        print("refusing to compare results from mixed environment versions", file=sys.stderr)
        return EXIT_CONFIG

    by_sf: dict[float, dict] = {}
    for doc in records:
        sf = doc.get("speed_factor")
        if sf is None:
            continue
        row = by_sf.setdefault(sf, {})
        method = doc["method"]
        if method == "greedy":
            row["greedy_R"] = doc.get("reward_kj_per_m2")
            row["greedy_time_s"] = doc["timing"]["wall_time_s"]
        elif method == "rlcbs":
            reward = doc.get("reward_kj_per_m2")
            if doc.get("feasible") and reward is not None:
                incumbent = row.get("rlcbs_R")
                if incumbent is None or reward > incumbent:
                    row["rlcbs_R"] = reward
                    row["rlcbs_n_b"] = doc.get("n_b")
                    row["rlcbs_cumul_time_s"] = doc["timing"].get(
                        "cumulative_s", doc["timing"]["wall_time_s"]
                    )
                    row["rlcbs_n_dryers"] = doc.get("n_modules")
        elif method == "ga":
            row["ga_R"] = doc.get("reward_kj_per_m2")
            row["ga_time_s"] = doc["timing"]["wall_time_s"]

    rows = []
    for sf in sorted(by_sf, key=lambda s: -sf_to_vm(s)):
        row = {"v_m": round(sf_to_vm(sf), 4)}
        row.update(by_sf[sf])
        rows.append(row)

    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    out_path = Path(args.out)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARE_COLUMNS)
        for row in rows:
            writer.writerow([fmt(row.get(col)) for col in COMPARE_COLUMNS])
        if rows:
            average = {"v_m": "Average"}
            for col in COMPARE_COLUMNS[1:]:
                values = [row[col] for row in rows if isinstance(row.get(col), (int, float))]
                average[col] = sum(values) / len(values) if values else None
            writer.writerow([fmt(average.get(col)) for col in COMPARE_COLUMNS])
    print(f"wrote {out_path} ({len(rows)} data rows)")
    return EXIT_OK


def cmd_bench_cache(args) -> int:
    horizon, n_beams = args.horizon, args.beams
    if args.actions < n_beams:
        print(
            f"config error: toy action count {args.actions} must be >= n_b {n_beams} "
            "to keep every beam slot busy",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    spec = ToyEnvSpec(n_actions=args.actions, horizon=horizon, n_contexts=args.contexts, seed=args.seed)
    policy = random_toy_policy(spec, args.seed)
    search = lambda workers: SearchConfig(
        n_beams=n_beams, include_greedy_seed=False, refine=False, workers=workers
    )
    episode = EpisodeConfig()

    uncached_theory, cached_theory = step_savings(horizon, n_beams)
    report = {"horizon": horizon, "n_b": n_beams,
              "theoretical": {"uncached": uncached_theory, "cached": cached_theory}}

    engine = RolloutEngine(lambda: ToyEnv(spec), InMemoryStore())
    res_cached = rlcbs_solve(engine, policy, episode, search=search(1))
    report["cached_1_worker"] = {
        "env_steps_simulated": engine.stats.env_steps_simulated,
        "env_steps_replayed": engine.stats.env_steps_replayed,
    }

    engine_off = RolloutEngine(lambda: ToyEnv(spec), None)
    res_uncached = rlcbs_solve(engine_off, policy, episode, search=search(1))
    report["uncached_1_worker"] = {
        "env_steps_simulated": engine_off.stats.env_steps_simulated,
        "env_steps_replayed": engine_off.stats.env_steps_replayed,
    }

    engine_k = RolloutEngine(lambda: ToyEnv(spec), InMemoryStore())
    res_k = rlcbs_solve(engine_k, policy, episode, search=search(args.workers))
    report[f"cached_{args.workers}_workers"] = {
        "env_steps_simulated": engine_k.stats.env_steps_simulated,
        "env_steps_replayed": engine_k.stats.env_steps_replayed,
    }
    report["results_identical"] = (
        res_cached.actions == res_uncached.actions == res_k.actions
    )

    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        _write_json(Path(args.out), report)
    return EXIT_OK


def cmd_brute(args) -> int:
    config = _load_config(args)
    toy = config.get("toy", {})
    try:
        spec = ToyEnvSpec(
            n_actions=toy.get("n_actions", args.actions),
            horizon=toy.get("horizon", args.horizon),
            n_contexts=toy.get("n_contexts", args.contexts),
            seed=toy.get("seed", config.get("seed", args.seed)),
        )
        constraints, processors = from_config(_constraint_specs({**config, "constraints": config.get("constraints", "none")}))
        seq, reward = brute_force_optimum(spec, constraints, processors)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    feasible = np.isfinite(reward)
    print(json.dumps({"actions": list(seq), "reward": reward if feasible else None,
                      "feasible": bool(feasible)}, sort_keys=True))
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drybeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run a search method over a config grid")
    p_solve.add_argument("--config", help="JSON run config")
    p_solve.add_argument("--method", choices=["rlcbs", "greedy", "ga", "brute"])
    p_solve.add_argument("--sf", help="comma-separated speed factors")
    p_solve.add_argument("--n-beams", dest="n_beams", help="comma-separated n_b schedule")
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--output-dir", dest="output_dir")
    p_solve.add_argument("--workers", type=int)
    p_solve.add_argument("--cache", help="'memory', 'none', or host:port")
    p_solve.set_defaults(func=cmd_solve)

    p_cmp = sub.add_parser("compare", help="merge result dirs into the summary CSV")
    p_cmp.add_argument("results", nargs="+", help="result directories")
    p_cmp.add_argument("--out", default="compare.csv")
    p_cmp.set_defaults(func=cmd_compare)

    p_bench = sub.add_parser("bench-cache", help="measure cache step savings")
    p_bench.add_argument("--horizon", type=int, default=12)
    p_bench.add_argument("--beams", type=int, default=4)
    p_bench.add_argument("--workers", type=int, default=8)
    p_bench.add_argument("--actions", type=int, default=8)
    p_bench.add_argument("--contexts", type=int, default=6)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out")
    p_bench.set_defaults(func=cmd_bench_cache)

    p_brute = sub.add_parser("brute", help="brute-force a toy instance")
    p_brute.add_argument("--config")
    p_brute.add_argument("--actions", type=int, default=4)
    p_brute.add_argument("--horizon", type=int, default=6)
    p_brute.add_argument("--contexts", type=int, default=5)
    p_brute.add_argument("--seed", type=int, default=0)
    p_brute.set_defaults(func=cmd_brute)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line harness.

Subcommands:

* ``run``          play a configured experiment, write CSV metrics and a manifest
* ``validate``     resolve a config and print the arm table without running
* ``bench-timing`` measure per-policy decision time against arm-set size
* ``bench-kernel`` compare the compiled and pure-Python kernels

Configs are TOML (or JSON with the same structure); a previously written
``manifest.json`` is also accepted and reproduces its run bit for bit.
Exit codes: 0 success, 2 malformed config (the message names the
offending field), 3 unwritable output location.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, _accel
from .market import (
    ConfigurationError,
    PriceLevels,
    ProductGrid,
    make_valuation_model,
)
from .oracle import theorem2_asymptote
from .policies import PolicyConfig
from .runner import (
    BernoulliArmsEnvironment,
    ExperimentConfig,
    MarketEnvironment,
    run_episode,
    run_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OUTPUT = 3

_GRID_KEYS = {"vm_types", "edge_nodes"}
_ARMS_KEYS = {"scheme", "count", "price_levels", "seed", "prices"}
_VALUATION_KEYS = {"kind", "mean", "std", "success_prob"}
_RUN_KEYS = {"horizon", "episodes", "seed", "checkpoints", "capacity"}
_POLICY_KEYS = {"kind", "label", "gamma", "epsilon", "divergence", "exploit_rule"}


def _fmt(x) -> str:
    """Serialize one CSV cell; floats carry 9 significant digits."""
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _fail(message: str) -> ConfigurationError:
    return ConfigurationError(message)


def _section(raw: dict, name: str, required: bool = True) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise _fail(f"config error: missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise _fail(f"config error: [{name}] must be a table")
    return sec


def _check_keys(section: dict, allowed: set, name: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise _fail(
            f"config error: [{name}] has unknown field(s) {sorted(unknown)}"
        )


def _get_int(section: dict, sec_name: str, key: str, default=None, required=False):
    if key not in section:
        if required:
            raise _fail(f"config error: [{sec_name}] missing required field '{key}'")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(f"config error: [{sec_name}].{key} must be an integer")
    return value


def _get_float(section: dict, sec_name: str, key: str, default=None):
    if key not in section:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(f"config error: [{sec_name}].{key} must be a number")
    return float(value)


def load_raw_config(path: str) -> dict:
    """Parse a TOML or JSON config file; unwrap a manifest's config echo."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise _fail(f"config error: cannot read {path!r}: {exc}") from exc
    text = data.decode("utf-8", errors="replace").lstrip()
    try:
        if p.suffix.lower() == ".json" or text.startswith("{"):
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise _fail(f"config error: cannot parse {path!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise _fail(f"config error: {path!r} does not hold a config table")
    if "config" in raw and isinstance(raw["config"], dict) and "run" in raw["config"]:
        raw = raw["config"]
    return raw


def _parse_checkpoints_arg(text: str):
    if text == "geometric":
        return "geometric"
    try:
        points = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise _fail(
            "config error: --checkpoints must be 'geometric' or comma-separated integers"
        ) from exc
    if not points:
        raise _fail("config error: --checkpoints list is empty")
    return points


def resolve_config(
    raw: dict,
    seed_override: int | None = None,
    checkpoints_override=None,
) -> tuple[ExperimentConfig, dict]:
    """Turn a raw config mapping into an ExperimentConfig plus its echo.

    The echo is the fully resolved config (defaults filled, arm seed and
    realized arm prices included) written into the manifest; feeding it
    back reproduces the experiment.
    """
    grid_sec = _section(raw, "grid")
    _check_keys(grid_sec, _GRID_KEYS, "grid")
    grid = ProductGrid(
        num_vm_types=_get_int(grid_sec, "grid", "vm_types", required=True),
        num_edge_nodes=_get_int(grid_sec, "grid", "edge_nodes", required=True),
    )

    arms_sec = _section(raw, "arms")
    _check_keys(arms_sec, _ARMS_KEYS, "arms")
    levels_raw = arms_sec.get("price_levels")
    if levels_raw is None:
        raise _fail("config error: [arms] missing required field 'price_levels'")
    if not isinstance(levels_raw, (list, tuple)):
        raise _fail("config error: [arms].price_levels must be a list of numbers")
    levels = PriceLevels(tuple(float(x) for x in levels_raw))
    num_arms = _get_int(arms_sec, "arms", "count", required=True)
    scheme = arms_sec.get("scheme", "uniform_ladder")
    if not isinstance(scheme, str):
        raise _fail("config error: [arms].scheme must be a string")
    arm_seed = _get_int(arms_sec, "arms", "seed", default=None)

    val_sec = _section(raw, "valuation")
    _check_keys(val_sec, _VALUATION_KEYS, "valuation")
    kind = val_sec.get("kind")
    if not isinstance(kind, str):
        raise _fail("config error: [valuation] missing required field 'kind'")
    val_params = {}
    if kind == "truncated_gaussian":
        val_params["mean"] = _get_float(val_sec, "valuation", "mean", 0.2)
        val_params["std"] = _get_float(val_sec, "valuation", "std", 0.2)
    elif kind == "truncated_exponential":
        val_params["mean"] = _get_float(val_sec, "valuation", "mean", 2.0)
    elif kind == "bernoulli":
        sp = val_sec.get("success_prob", 1.0)
        val_params["success_prob"] = sp
    valuation = make_valuation_model(kind, **val_params)

    run_sec = _section(raw, "run")
    _check_keys(run_sec, _RUN_KEYS, "run")
    horizon = _get_int(run_sec, "run", "horizon", required=True)
    episodes = _get_int(run_sec, "run", "episodes", required=True)
    seed = _get_int(run_sec, "run", "seed", default=0)
    if seed_override is not None:
        seed = seed_override
    capacity = run_sec.get("capacity")
    if capacity is not None and not (
        isinstance(capacity, int)
        or (isinstance(capacity, list) and all(isinstance(c, int) for c in capacity))
    ):
        raise _fail("config error: [run].capacity must be an integer or integer list")
    checkpoints = run_sec.get("checkpoints", "geometric")
    if checkpoints_override is not None:
        checkpoints = checkpoints_override
    if isinstance(checkpoints, str):
        if checkpoints != "geometric":
            raise _fail(
                "config error: [run].checkpoints must be 'geometric' or an integer list"
            )
    elif isinstance(checkpoints, list):
        if not all(isinstance(c, int) and not isinstance(c, bool) for c in checkpoints):
            raise _fail("config error: [run].checkpoints entries must be integers")
    else:
        raise _fail(
            "config error: [run].checkpoints must be 'geometric' or an integer list"
        )

    policy_rows = raw.get("policy")
    if not policy_rows or not isinstance(policy_rows, list):
        raise _fail("config error: at least one [[policy]] entry is required")
    policies = []
    for i, row in enumerate(policy_rows):
        if not isinstance(row, dict):
            raise _fail(f"config error: [[policy]] entry {i} must be a table")
        _check_keys(row, _POLICY_KEYS, f"policy[{i}]")
        p_kind = row.get("kind")
        if not isinstance(p_kind, str):
            raise _fail(f"config error: policy[{i}] missing required field 'kind'")
        policies.append(
            PolicyConfig(
                kind=p_kind,
                label=row.get("label"),
                gamma=_get_float(row, f"policy[{i}]", "gamma", 0.0),
                epsilon=_get_float(row, f"policy[{i}]", "epsilon", 0.1),
                divergence=row.get("divergence", "bernoulli"),
                eg_exploit_rule=row.get("exploit_rule", "empirical_mean"),
                horizon=horizon,
                num_arms=num_arms,
            )
        )

    environment = MarketEnvironment(
        grid=grid,
        levels=levels,
        num_arms=num_arms,
        valuation=valuation,
        arm_scheme=scheme,
        arm_seed=arm_seed,
        capacity=capacity,
    )
    config = ExperimentConfig(
        environment=environment,
        policies=policies,
        horizon=horizon,
        episodes=episodes,
        master_seed=seed,
        checkpoints=checkpoints,
    )

    resolved_seed = environment.resolved_arm_seed(seed)
    arms = environment.build_arms(seed)
    echo = {
        "grid": {"vm_types": grid.num_vm_types, "edge_nodes": grid.num_edge_nodes},
        "arms": {
            "scheme": scheme,
            "count": num_arms,
            "price_levels": list(levels.levels),
            "seed": resolved_seed,
            "prices": [list(a.prices) for a in arms],
        },
        "valuation": {"kind": kind, **val_params},
        "run": {
            "horizon": horizon,
            "episodes": episodes,
            "seed": seed,
            "checkpoints": [int(c) for c in config.resolved_checkpoints()],
            "capacity": capacity,
        },
        "policy": [
            {
                "kind": p.kind,
                "label": p.resolved_label,
                "gamma": p.gamma,
                "epsilon": p.epsilon,
                "divergence": p.divergence,
                "exploit_rule": p.eg_exploit_rule,
            }
            for p in policies
        ],
    }
    return config, echo


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def write_outputs(out_dir: Path, metrics, echo: dict, meta: dict) -> dict:
    """Write metrics.csv, arms.csv, histogram.csv, timing.csv and manifest.json."""
    cps = metrics.checkpoints
    rows = []
    for label, pm in metrics.policies.items():
        for i, t in enumerate(cps):
            rows.append(
                (
                    label,
                    int(t),
                    float(pm.mean_cum_reward[i]),
                    float(pm.se_cum_reward[i]),
                    float(pm.mean_pseudo_regret[i]),
                    float(pm.se_pseudo_regret[i]),
                )
            )
    _write_csv(
        out_dir / "metrics.csv",
        ["policy", "checkpoint_t", "mean_cum_reward", "se_reward",
         "mean_pseudo_regret", "se_regret"],
        rows,
    )

    grid = metrics.config.environment.grid
    price_cols = [
        f"price_{i}_{j}"
        for i in range(grid.num_vm_types)
        for j in range(grid.num_edge_nodes)
    ]
    arm_rows = []
    for arm in metrics.arms:
        arm_rows.append(
            (arm.arm_id, *[float(p) for p in arm.prices],
             float(metrics.table.means[arm.arm_id]),
             float(metrics.table.gaps[arm.arm_id]))
        )
    _write_csv(
        out_dir / "arms.csv",
        ["arm_id", *price_cols, "expected_reward", "gap"],
        arm_rows,
    )

    hist_rows = []
    for label, pm in metrics.policies.items():
        for arm_id in range(metrics.table.num_arms):
            hist_rows.append((label, arm_id, float(pm.mean_selection_counts[arm_id])))
    _write_csv(
        out_dir / "histogram.csv",
        ["policy", "arm_id", "mean_selection_count"],
        hist_rows,
    )

    timing_rows = [
        (label, float(pm.total_decision_seconds))
        for label, pm in metrics.policies.items()
    ]
    _write_csv(out_dir / "timing.csv", ["policy", "total_decision_seconds"], timing_rows)

    manifest = {
        "tool": "edgebandit",
        "version": __version__,
        **meta,
        "outputs": {
            "metrics": "metrics.csv",
            "arms": "arms.csv",
            "histogram": "histogram.csv",
            "timing": "timing.csv",
        },
        "oracle": {
            "best_arm_id": metrics.table.best_arm_id,
            "best_mean": metrics.table.best_mean,
            "theorem2_asymptote": theorem2_asymptote(metrics.table),
        },
        "policies": {
            label: {
                "total_decision_seconds": pm.total_decision_seconds,
                "median_round_decision_seconds": pm.median_round_decision_seconds,
                "mean_stop_round": pm.mean_stop_round,
                "episodes_stopped_early": pm.episodes_stopped_early,
            }
            for label, pm in metrics.policies.items()
        },
        "config": echo,
    }
    with (out_dir / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def _print_summary(metrics, backend: str, parallelism: int) -> None:
    cfg = metrics.config
    print(
        f"backend={backend} parallelism={parallelism} horizon={cfg.horizon} "
        f"episodes={cfg.episodes} arms={cfg.num_arms} "
        f"best_arm={metrics.table.best_arm_id} best_mean={metrics.table.best_mean:.6g}"
    )
    print(f"{'policy':<20} {'final_reward':>14} {'final_regret':>14} {'decision_s':>12}")
    for label, pm in metrics.policies.items():
        print(
            f"{label:<20} {pm.mean_cum_reward[-1]:>14.6g} "
            f"{pm.mean_pseudo_regret[-1]:>14.6g} {pm.total_decision_seconds:>12.3f}"
        )


def cmd_run(args) -> int:
    raw = load_raw_config(args.config)
    overrides = {}
    if args.checkpoints is not None:
        overrides["checkpoints_override"] = _parse_checkpoints_arg(args.checkpoints)
    config, echo = resolve_config(raw, seed_override=args.seed, **overrides)

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"output error: cannot write to {args.out!r}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    backend = _accel.get_backend(args.backend)
    backend_name = "compiled" if backend.__name__.endswith("_episode_c") else "python"
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    metrics = run_experiment(config, parallelism=args.parallelism, backend=args.backend)
    elapsed = time.perf_counter() - t0

    meta = {
        "created_utc": started.isoformat(),
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": elapsed,
        "backend": backend_name,
        "parallelism": args.parallelism,
        "master_seed": config.master_seed,
    }
    try:
        write_outputs(out_dir, metrics, echo, meta)
    except OSError as exc:
        print(f"output error: cannot write to {args.out!r}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    _print_summary(metrics, backend_name, args.parallelism)
    return EXIT_OK


def cmd_validate(args) -> int:
    raw = load_raw_config(args.config)
    config, echo = resolve_config(raw, seed_override=args.seed)
    env = config.environment
    arms = env.build_arms(config.master_seed)
    from .oracle import build_mean_table

    table = build_mean_table(arms, env.valuation)
    print(
        f"valid config: arms={config.num_arms} products={env.grid.num_products} "
        f"horizon={config.horizon} episodes={config.episodes} seed={config.master_seed}"
    )
    print(f"checkpoints: {[int(c) for c in config.resolved_checkpoints()]}")
    print(f"policies: {[p.resolved_label for p in config.policies]}")
    print(f"{'arm_id':>6} {'expected_reward':>16} {'gap':>12}  prices")
    for arm in arms:
        mark = " *" if arm.arm_id == table.best_arm_id else ""
        prices = ",".join(f"{p:.4g}" for p in arm.prices)
        print(
            f"{arm.arm_id:>6} {table.means[arm.arm_id]:>16.9g} "
            f"{table.gaps[arm.arm_id]:>12.9g}  [{prices}]{mark}"
        )
    return EXIT_OK


def cmd_bench_timing(args) -> int:
    try:
        arm_counts = [int(x) for x in args.arms.split(",") if x.strip()]
    except ValueError:
        print("config error: --arms must be comma-separated integers", file=sys.stderr)
        return EXIT_CONFIG
    if not arm_counts or any(k < 2 for k in arm_counts):
        print("config error: --arms needs integers >= 2", file=sys.stderr)
        return EXIT_CONFIG
    if args.trials < 1 or args.horizon < max(arm_counts):
        print(
            "config error: need trials >= 1 and horizon >= max arm count",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    out_path = Path(args.out)
    rows = []
    kinds = ("kl_ucb", "moss", "ucb", "thompson", "epsilon_greedy")
    for K in arm_counts:
        env = BernoulliArmsEnvironment(means=np.linspace(0.1, 0.9, K))
        policies = [PolicyConfig(kind=k, horizon=args.horizon, num_arms=K) for k in kinds]
        config = ExperimentConfig(
            environment=env,
            policies=policies,
            horizon=args.horizon,
            episodes=args.trials,
            master_seed=args.seed,
        )
        for policy in policies:
            times = [
                run_episode(config, policy, trial, backend=args.backend).decision_seconds
                for trial in range(args.trials)
            ]
            arr = np.asarray(times)
            mean_s = float(arr.mean())
            std_s = float(arr.std(ddof=1)) if args.trials > 1 else 0.0
            rows.append((policy.kind, K, mean_s, std_s))
            print(f"K={K:<5d} {policy.kind:<16s} mean={mean_s:.6f}s std={std_s:.6f}s")
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(out_path, ["policy", "num_arms", "mean_seconds", "std_seconds"], rows)
    except OSError as exc:
        print(f"output error: cannot write to {args.out!r}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    return EXIT_OK


def cmd_bench_kernel(args) -> int:
    available = _accel.available_backends()
    if "compiled" not in available:
        print("compiled kernel unavailable; nothing to compare", file=sys.stderr)
        return 1
    levels = PriceLevels(tuple(round(0.05 * i, 10) for i in range(1, 21)))
    env = MarketEnvironment(
        grid=ProductGrid(3, 3),
        levels=levels,
        num_arms=20,
        valuation=make_valuation_model("uniform"),
        arm_scheme="uniform_ladder",
    )
    kinds = ("kl_ucb", "moss", "ucb", "thompson", "epsilon_greedy")
    policies = [
        PolicyConfig(kind=k, horizon=args.horizon, num_arms=20) for k in kinds
    ]
    config = ExperimentConfig(
        environment=env,
        policies=policies,
        horizon=args.horizon,
        episodes=1,
        master_seed=args.seed,
    )
    print(f"{'policy':<16} {'compiled_s':>12} {'python_s':>12} {'speedup':>9}  identical")
    all_same = True
    for policy in policies:
        timed = {}
        traces = {}
        for backend in ("compiled", "python"):
            t0 = time.perf_counter()
            traces[backend] = run_episode(config, policy, 0, backend=backend)
            timed[backend] = time.perf_counter() - t0
        a, b = traces["compiled"], traces["python"]
        same = bool(
            np.array_equal(a.selections, b.selections)
            and np.array_equal(a.rewards, b.rewards)
            and np.array_equal(a.pulls, b.pulls)
            and np.array_equal(a.reward_sum, b.reward_sum)
        )
        all_same = all_same and same
        speedup = timed["python"] / timed["compiled"] if timed["compiled"] > 0 else 0.0
        print(
            f"{policy.kind:<16} {timed['compiled']:>12.4f} {timed['python']:>12.4f} "
            f"{speedup:>8.1f}x  {same}"
        )
    if not all_same:
        print("kernel mismatch: backends disagreed on at least one trace", file=sys.stderr)
        return 1
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgebandit",
        description="Posted-price bandit simulation for heterogeneous edge resources",
    )
    parser.add_argument("--version", action="version", version=f"edgebandit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment and write metrics")
    run_p.add_argument("--config", required=True, help="TOML/JSON config or manifest.json")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override [run].seed")
    run_p.add_argument("--parallelism", type=int, default=1, help="episode worker threads")
    run_p.add_argument(
        "--checkpoints", default=None, help="'geometric' or comma-separated rounds"
    )
    run_p.add_argument(
        "--backend", default=None, choices=("auto", "compiled", "python"),
        help="episode kernel (default: auto)",
    )
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate", help="resolve a config and print the arm table")
    val_p.add_argument("--config", required=True)
    val_p.add_argument("--seed", type=int, default=None)
    val_p.set_defaults(func=cmd_validate)

    bt_p = sub.add_parser(
        "bench-timing", help="decision-time scaling on a synthetic Bernoulli instance"
    )
    bt_p.add_argument("--arms", default="50,200,500", help="comma-separated arm counts")
    bt_p.add_argument("--trials", type=int, default=5)
    bt_p.add_argument("--horizon", type=int, default=10000)
    bt_p.add_argument("--seed", type=int, default=20240601)
    bt_p.add_argument("--out", required=True, help="output CSV path")
    bt_p.add_argument(
        "--backend", default=None, choices=("auto", "compiled", "python")
    )
    bt_p.set_defaults(func=cmd_bench_timing)

    bk_p = sub.add_parser(
        "bench-kernel", help="compare compiled and pure-Python kernels"
    )
    bk_p.add_argument("--horizon", type=int, default=5000)
    bk_p.add_argument("--seed", type=int, default=20240601)
    bk_p.set_defaults(func=cmd_bench_kernel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        msg = str(exc)
        if not msg.startswith("config error"):
            msg = f"config error: {msg}"
        print(msg, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

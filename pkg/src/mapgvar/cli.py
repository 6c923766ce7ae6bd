"""Command-line front door: toy, verify, report, train, gen.

Every command is deterministic given --seed and writes byte-stable files;
stdout mentions files only by basename so two runs into different --out
directories produce identical bytes everywhere. Exit codes: 0 success,
1 verification/golden failure, 2 usage error, 3 I/O error.

The default output directory is the current one, overridable by --out or
the MAPGVAR_OUT environment variable (the variable configures nothing else).
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import ob_surrogate_discrete
from .estimators import agent_axis_view, agent_prob_table
from .games import load_game, parse_game, random_game, serialize_game
from .policies import (
    grad_log_softmax,
    load_policy,
    random_softmax_policy,
    uniform_policy,
)
from .toy import run_toy
from .training import (
    DivergenceError,
    TrainConfig,
    config_from_dict,
    save_checkpoint,
    train,
)
from .values import advantage_decomposition, solve_values
from .variance import (
    advantage_variance_bound,
    advantage_variance_identity,
    build_variance_report,
    centralized_gap_bound,
    coma_gap_bound,
    excess_surrogate_variance,
    excess_variance_bounds,
    local_variance,
)

VERIFY_SCHEMA_VERSION = 1


def _out_dir(args) -> str:
    out = args.out or os.environ.get("MAPGVAR_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_json(path: str, data) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# toy


def cmd_toy(args) -> int:
    out = _out_dir(args)
    report = run_toy()
    text = report.render_text()
    sys.stdout.write(text)
    _write_text(os.path.join(out, "toy_report.txt"), text)
    table_rows = [
        (
            a,
            repr(float(np.log(8.0)) if a == 0 else 0.0),
            repr(float(report.pi[a])),
            repr(float(report.x[a])),
            repr(float((2.0, 1.0, 100.0)[a])),
            repr(float(report.advantage[a])),
            repr(float(report.x_exact[a])),
            f"{float(report.x_values_rounded[a]):.2f}",
        )
        for a in range(3)
    ]
    if args.format == "csv":
        _write_csv(
            os.path.join(out, "toy_table.csv"),
            ("action", "logit", "pi", "x", "q", "advantage", "x_value", "x_value_rounded"),
            table_rows,
        )
    else:
        _write_json(
            os.path.join(out, "toy_table.json"),
            {
                "schema_version": 1,
                "pi": report.pi.tolist(),
                "x": report.x.tolist(),
                "q": [2.0, 1.0, 100.0],
                "counterfactual_baseline": report.coma_b,
                "advantage": report.advantage.tolist(),
                "optimal_baseline": report.b_star_exact,
                "x_values": report.x_exact.tolist(),
                "x_values_rounded": report.x_values_rounded.tolist(),
                "variances": report.variances,
                "ob_replay_variance": report.ob_replay_variance,
                "checks": report.checks,
                "notes": report.notes,
            },
        )
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# verify


def _verify_suites(n_games: int, n_agents: int, seed: int, sabotage: bool) -> dict:
    tol = 1e-9
    rng = np.random.default_rng(seed)
    suites = {
        "advantage_decomposition": {"checks": 0, "violations": 0, "max_abs_error": 0.0},
        "advantage_variance_identity": {"checks": 0, "violations": 0, "max_abs_error": 0.0},
        "advantage_variance_bound": {"checks": 0, "violations": 0, "min_slack": math.inf},
        "centralized_gap_bound": {"checks": 0, "violations": 0, "min_slack": math.inf},
        "coma_gap_bound": {"checks": 0, "violations": 0, "min_slack": math.inf},
        "optimal_baseline_identity": {"checks": 0, "violations": 0, "max_abs_error": 0.0},
        "optimal_baseline_scan": {"checks": 0, "violations": 0, "min_margin": math.inf},
        "excess_variance_bounds": {"checks": 0, "violations": 0},
    }
    for g_idx in range(n_games):
        n_states = int(rng.integers(1, 4))
        n_actions = int(rng.integers(2, 4))
        game_seed = int(rng.integers(0, 2**31 - 1))
        game = random_game(n_agents, n_states, n_actions, seed=game_seed)
        policy = random_softmax_policy(game, rng)
        tables = solve_values(game, policy)

        perms = (
            list(itertools.permutations(range(n_agents)))
            if n_agents <= 4
            else [tuple(range(n_agents))]
        )

        decomp = suites["advantage_decomposition"]
        for s in range(game.n_states):
            actions = tuple(
                int(rng.integers(game.action_counts[i])) for i in range(n_agents)
            )
            for order in perms:
                acts = tuple(actions[i] for i in order)
                for prefix_len in (0, 1):
                    if prefix_len >= n_agents:
                        continue
                    lhs, rhs = advantage_decomposition(
                        game, policy, tables, s, order, acts, prefix_len=prefix_len
                    )
                    if sabotage:
                        rhs = rhs + 1.0
                    err = abs(lhs - rhs)
                    decomp["checks"] += 1
                    decomp["max_abs_error"] = max(decomp["max_abs_error"], err)
                    if err > tol:
                        decomp["violations"] += 1

        ident = suites["advantage_variance_identity"]
        for s in range(game.n_states):
            for order in perms:
                lhs, rhs = advantage_variance_identity(game, policy, tables, s, order)
                if sabotage:
                    rhs = -rhs
                err = abs(lhs - rhs)
                ident["checks"] += 1
                ident["max_abs_error"] = max(ident["max_abs_error"], err)
                if err > tol:
                    ident["violations"] += 1
            if n_agents >= 2:
                lhs, rhs = advantage_variance_identity(
                    game, policy, tables, s, prefix=((0, 0),)
                )
                if sabotage:
                    rhs = -rhs
                err = abs(lhs - rhs)
                ident["checks"] += 1
                ident["max_abs_error"] = max(ident["max_abs_error"], err)
                if err > tol:
                    ident["violations"] += 1

        bound = suites["advantage_variance_bound"]
        for s in range(game.n_states):
            lhs, rhs = advantage_variance_bound(game, policy, tables, s)
            slack = rhs - lhs
            bound["checks"] += 1
            bound["min_slack"] = min(bound["min_slack"], slack)
            if slack < -tol:
                bound["violations"] += 1

        for name, fn in (
            ("centralized_gap_bound", centralized_gap_bound),
            ("coma_gap_bound", coma_gap_bound),
        ):
            entry = suites[name]
            for agent in range(n_agents):
                rep = fn(game, policy, agent, tables)
                slack = min(b - rep.lhs for b in rep.bounds)
                entry["checks"] += 1
                entry["min_slack"] = min(entry["min_slack"], slack)
                if not rep.holds:
                    entry["violations"] += 1

        ob_eq = suites["optimal_baseline_identity"]
        ob_scan = suites["optimal_baseline_scan"]
        ob_bounds = suites["excess_variance_bounds"]
        for agent in range(n_agents):
            rows = agent_axis_view(game, tables.q, agent)
            pi_i = agent_prob_table(game, policy, agent)
            s = int(rng.integers(0, game.n_states))
            m = int(rng.integers(0, rows.shape[1]))
            q_row = rows[s, m]
            pi_row = pi_i[s]
            grads = np.stack(
                [grad_log_softmax(pi_row, a) for a in range(len(pi_row))]
            )
            b_star = ob_surrogate_discrete(q_row, pi_row)
            base_var = local_variance(pi_row, q_row - b_star, grads)
            for b in np.linspace(b_star - 5.0, b_star + 5.0, 21):
                direct = local_variance(pi_row, q_row - b, grads) - base_var
                closed = excess_surrogate_variance(float(b), q_row, pi_row)
                err = abs(direct - closed)
                ob_eq["checks"] += 1
                ob_eq["max_abs_error"] = max(ob_eq["max_abs_error"], err)
                if err > tol:
                    ob_eq["violations"] += 1
                ob_scan["checks"] += 1
                ob_scan["min_margin"] = min(ob_scan["min_margin"], direct)
                if direct < -tol:
                    ob_scan["violations"] += 1
            ob_bounds["checks"] += 1
            if not excess_variance_bounds(q_row, pi_row).holds:
                ob_bounds["violations"] += 1

    for entry in suites.values():
        for key, value in list(entry.items()):
            if isinstance(value, float) and math.isinf(value):
                entry[key] = None
    total = sum(entry["violations"] for entry in suites.values())
    return {
        "schema_version": VERIFY_SCHEMA_VERSION,
        "games": n_games,
        "agents": n_agents,
        "seed": seed,
        "suites": suites,
        "total_violations": total,
        "ok": total == 0,
    }


def cmd_verify(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    result = _verify_suites(args.games, args.agents, seed, args.sabotage)
    for name, entry in result["suites"].items():
        stats = ", ".join(
            f"{k}={v!r}"
            for k, v in entry.items()
            if k not in ("checks", "violations")
        )
        status = "PASS" if entry["violations"] == 0 else "FAIL"
        print(
            f"[{status}] {name}: {entry['checks']} checks, "
            f"{entry['violations']} violations ({stats})"
        )
    print(
        f"total violations: {result['total_violations']} "
        f"over {result['games']} games"
    )
    if args.format == "json":
        _write_json(os.path.join(out, "verify_report.json"), result)
    else:
        rows = []
        for name, entry in result["suites"].items():
            stat_items = [
                (k, v) for k, v in entry.items() if k not in ("checks", "violations")
            ]
            stat_name, stat_value = stat_items[0] if stat_items else ("", "")
            rows.append(
                (name, entry["checks"], entry["violations"], stat_name, stat_value)
            )
        _write_csv(
            os.path.join(out, "verify_report.csv"),
            ("suite", "checks", "violations", "stat_name", "stat_value"),
            rows,
        )
    return 0 if result["ok"] else 1


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    out = _out_dir(args)
    game = load_game(args.game)
    if args.policy == "uniform":
        policy = uniform_policy(game)
    else:
        policy = load_policy(args.policy)
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    report = build_variance_report(
        game,
        policy,
        args.agent,
        t_max=args.t_max,
        mc_trajectories=args.mc,
        rng=rng,
    )
    for tag, value in sorted(report.discounted_per_step_sum.items()):
        print(f"{tag}: discounted_per_step_sum = {value!r}")
    if report.mc:
        for tag, entry in sorted(report.mc.items()):
            print(
                f"{tag}: trajectory_draw variance = {entry['estimate']!r} "
                f"(se {entry['se']!r}, n {entry['n']})"
            )
    if args.format == "json":
        _write_json(os.path.join(out, "variance_report.json"), report.to_json_dict())
    else:
        _write_csv(
            os.path.join(out, "variance_report.csv"),
            ("kind", "t", "term", "value"),
            report.to_csv_rows(),
        )
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    out = _out_dir(args)
    game = load_game(args.game)
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            config = config_from_dict(json.load(fh))
    else:
        config = TrainConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    try:
        result = train(game, None, config)
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        print(json.dumps(exc.report, sort_keys=True), file=sys.stderr)
        return 1
    history = result.history
    n_agents = game.n_agents
    _write_csv(
        os.path.join(out, "train_history.csv"),
        (
            "iteration",
            "expected_return",
            "grad_variance",
            "grad_norm",
            *(f"entropy_agent{i}" for i in range(n_agents)),
        ),
        history.to_csv_rows(),
    )
    _write_json(os.path.join(out, "train_summary.json"), history.to_json_dict())
    save_checkpoint(
        os.path.join(out, "checkpoint.json"),
        config,
        result.policy,
        result.final_rng_state,
    )
    print(f"final expected return: {history.returns[-1]!r}")
    print("wrote train_history.csv, train_summary.json, checkpoint.json")
    return 0


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    game = random_game(args.agents, args.states, args.actions, seed=seed)
    text = serialize_game(game)
    if parse_game(text) != game:
        print("generated game failed to round-trip", file=sys.stderr)
        return 1
    name = f"game_n{args.agents}_s{args.states}_k{args.actions}_seed{seed}.json"
    _write_text(os.path.join(out, name), text)
    print(f"wrote {name}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="deterministic seed (default 0; for train, the config file wins "
        "unless this is given)",
    )
    common.add_argument(
        "--out", default=None, help="output directory (default: MAPGVAR_OUT or .)"
    )
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="artifact format"
    )

    parser = argparse.ArgumentParser(
        prog="mapgvar",
        description="exact variance analysis and baselines for multi-agent "
        "policy gradients on finite games",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_toy = sub.add_parser(
        "toy", parents=[common], help="reproduce the one-state worked example"
    )
    p_toy.set_defaults(func=cmd_toy)

    p_verify = sub.add_parser(
        "verify", parents=[common], help="run identity/bound suites on random games"
    )
    p_verify.add_argument("--games", type=int, default=50)
    p_verify.add_argument("--agents", type=int, default=2)
    p_verify.add_argument("--sabotage", action="store_true", help=argparse.SUPPRESS)
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser(
        "report", parents=[common], help="write a variance report for a game file"
    )
    p_report.add_argument("--game", required=True)
    p_report.add_argument(
        "--policy", default="uniform", help="'uniform' or a policy JSON file"
    )
    p_report.add_argument("--agent", type=int, default=0)
    p_report.add_argument("--t-max", type=int, default=20)
    p_report.add_argument(
        "--mc", type=int, default=0, help="Monte-Carlo trajectories (0 = skip)"
    )
    p_report.set_defaults(func=cmd_report)

    p_train = sub.add_parser(
        "train", parents=[common], help="train tabular actors on a game file"
    )
    p_train.add_argument("--game", required=True)
    p_train.add_argument("--config", default=None, help="TrainConfig JSON file")
    p_train.set_defaults(func=cmd_train)

    p_gen = sub.add_parser(
        "gen", parents=[common], help="generate a random game file"
    )
    p_gen.add_argument("--agents", type=int, default=2)
    p_gen.add_argument("--states", type=int, default=2)
    p_gen.add_argument("--actions", type=int, default=2)
    p_gen.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

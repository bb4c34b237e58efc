"""Command-line entry point.

Subcommands: validate-data, split, bench, train-kg, train-agent, eval, plot,
serve. Options may come from a JSON config file (--config); explicit flags
take precedence over the file, which takes precedence over defaults. Every
run writes its resolved configuration into the run directory so results can
be reproduced bit-for-bit, and prints a machine-readable JSON summary.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import agent as agent_mod
from . import embed, evaluate, linkpred, plots
from .env import RewardConfig, default_max_steps, shaped_reward_config
from .errors import CraftbenchError
from .recipes import (
    SplitSpec, bundled_book, load_recipe_book, split_from_json, split_recipes,
    split_to_json,
)
from .vecenv import BatchRunner, benchmark_throughput


def _load_book(path: str | None):
    return load_recipe_book(path) if path else bundled_book()


def _load_split(book, args):
    if getattr(args, "split", None):
        with open(args.split, "r", encoding="utf-8") as f:
            return split_from_json(f.read())
    spec = SplitSpec(seed=args.split_seed, train_ratio=args.ratio, mode=args.split_mode)
    return split_recipes(book, spec)


def _run_dir(args) -> Path | None:
    if not getattr(args, "run_dir", None):
        return None
    path = Path(args.run_dir)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "config.json", "w", encoding="utf-8") as f:
        json.dump({k: v for k, v in vars(args).items() if k != "func"},
                  f, indent=1, default=str)
    return path


def _emit(summary: dict) -> None:
    print(json.dumps(summary))


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", help="path to an exported split file")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--split-mode", choices=["by-recipe", "by-goal"], default="by-recipe")


def cmd_validate_data(args):
    book = _load_book(args.data)
    _emit({
        "entities": len(book.entities),
        "recipes": len(book.recipes),
        "goals": len(book.goal_entities()),
        "self_pairs": sum(1 for r in book.recipes if r.ingredients[0] == r.ingredients[1]),
        "valid": True,
    })


def cmd_split(args):
    book = _load_book(args.data)
    spec = SplitSpec(seed=args.seed, train_ratio=args.ratio, mode=args.mode)
    split = split_recipes(book, spec)
    text = split_to_json(split)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    _emit({"train": len(split.train_recipes), "test": len(split.test_recipes),
           "out": args.out})


def cmd_bench(args):
    book = _load_book(args.data)
    split = _load_split(book, args)
    runner = BatchRunner(book, split, args.partition, args.depth, args.distractors,
                         args.envs, args.seed)
    report = benchmark_throughput(runner, duration=args.seconds, seed=args.seed)
    run_dir = _run_dir(args)
    if run_dir:
        (run_dir / "bench.json").write_text(report.to_json(), encoding="utf-8")
    print(report.to_json())


def cmd_train_kg(args):
    book = _load_book(args.data)
    split = _load_split(book, args)
    if args.scope == "partial":
        recipes = [book.recipes[i] for i in sorted(split.train_recipes)]
    else:
        recipes = list(book.recipes)
    triples = linkpred.recipes_to_triples(recipes)
    cfg = linkpred.KGTrainConfig(
        embedding_dim=args.k, epochs=args.epochs, lr=args.lr,
        reg_weight=args.reg, batch_size=args.batch, seed=args.seed,
        scope=args.scope)
    model = linkpred.train_link_model(book, triples, cfg)
    run_dir = _run_dir(args)
    out = args.out or (str(run_dir / "kg-model.npz") if run_dir else "kg-model.npz")
    linkpred.save_link_model(out, model)
    _emit({
        "out": out,
        "scope": args.scope,
        "triples": len(triples),
        "epochs": args.epochs,
        "first_loss": model.loss_history[0] if model.loss_history else None,
        "final_loss": model.loss_history[-1] if model.loss_history else None,
    })


def cmd_train_agent(args):
    book = _load_book(args.data)
    split = _load_split(book, args)
    emb_table = embed.build_features(book, args.features, dim=args.dim,
                                     seed=args.feature_seed)
    kg_model = linkpred.load_link_model(args.kg_model) if args.kg_model else None
    reward_cfg = (shaped_reward_config(args.depth) if args.reward == "shaped"
                  else RewardConfig())
    runner = BatchRunner(book, split, "train", args.depth, args.distractors,
                         args.envs, args.seed, reward_cfg=reward_cfg)
    dims = agent_mod.AgentDims(feat_dim=emb_table.dim, key_dim=args.key_dim,
                               value_dim=args.value_dim, hidden_dim=args.hidden_dim)
    net = agent_mod.AgentNet(dims, seed=args.seed)
    cfg = agent_mod.TrainConfig(
        lr=args.lr, num_envs=args.envs, unroll=args.unroll,
        entropy_coef=args.entropy_coef, total_steps=args.steps, seed=args.seed,
        kg_mode=args.kg_mode, metrics_interval=args.metrics_interval,
        eval_interval=args.eval_interval, eval_tasks=args.eval_tasks)
    run_dir = _run_dir(args)
    metrics_path = str(run_dir / "metrics.jsonl") if run_dir else args.metrics
    metrics = agent_mod.a2c_train(net, runner, emb_table, cfg, kg_model=kg_model,
                                  metrics_path=metrics_path)
    ckpt = args.out or (str(run_dir / "agent.npz") if run_dir else "agent.npz")
    agent_mod.save_agent(ckpt, net)
    train_points = [m for m in metrics if m["split"] == "train"]
    test_points = [m for m in metrics if m["split"] == "test"]
    _emit({
        "out": ckpt,
        "metrics": metrics_path,
        "steps": args.steps,
        "final_train_success": train_points[-1]["success_rate"] if train_points else None,
        "final_test_success": test_points[-1]["success_rate"] if test_points else None,
    })


def cmd_eval(args):
    book = _load_book(args.data)
    split = _load_split(book, args)
    kg_model = linkpred.load_link_model(args.kg_model) if args.kg_model else None

    if args.policy == "random":
        policy = evaluate.RandomPolicy()
    elif args.policy == "oracle":
        policy = evaluate.OraclePolicy(book)
    elif args.policy == "kg-greedy":
        if kg_model is None:
            raise CraftbenchError("kg-greedy needs --kg-model")
        policy = evaluate.KGGreedyPolicy(kg_model, subset=args.score_subset)
    elif args.policy.startswith("net:"):
        net = agent_mod.load_agent(args.policy.split(":", 1)[1])
        emb_table = embed.build_features(book, args.features, dim=args.dim,
                                         seed=args.feature_seed)
        policy = evaluate.NetPolicy(net, emb_table, kg_model, args.kg_mode)
    else:
        raise CraftbenchError(f"unknown policy {args.policy!r}")

    report = evaluate.evaluate(policy, book, split, args.partition, args.depth,
                               args.distractors, args.tasks, args.seed,
                               kg_mode=args.kg_mode)
    run_dir = _run_dir(args)
    if run_dir:
        (run_dir / "eval-report.json").write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        evaluate.append_report_csv(args.csv, report)
    _emit({
        "policy": report.policy,
        "partition": report.partition,
        "depth": report.depth,
        "num_distractors": report.num_distractors,
        "num_tasks": report.num_tasks,
        "success_rate": report.success_rate,
        "mean_steps": report.mean_steps,
    })


def cmd_plot(args):
    plots.plot_success_curves(args.metrics, args.out, split=args.plot_split,
                              title=args.title)
    _emit({"out": args.out, "csv": str(Path(args.out).with_suffix(".csv"))})


def cmd_serve(args):
    from . import service

    book = _load_book(args.data)
    split = _load_split(book, args)
    service.serve(book, split, host=args.host, port=args.port, log_dir=args.log_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="craftbench",
        description="Crafting-game RL benchmark: environment, KG-guided "
                    "agents, evaluation, and human-play service.")
    parser.add_argument("--config", help="JSON file of option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-data", help="parse and validate a recipe file")
    p.add_argument("--data", help="recipe file (defaults to the bundled set)")
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("split", help="create a train/test recipe split")
    p.add_argument("--data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--mode", choices=["by-recipe", "by-goal"], default="by-recipe")
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("bench", help="measure environment throughput")
    p.add_argument("--data")
    _add_split_flags(p)
    p.add_argument("--envs", type=int, default=128)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--distractors", type=int, default=8)
    p.add_argument("--partition", choices=["train", "test"], default="train")
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-kg", help="train the link-prediction model")
    p.add_argument("--data")
    _add_split_flags(p)
    p.add_argument("--scope", choices=["full", "partial"], default="full")
    p.add_argument("--k", type=int, default=128)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--reg", type=float, default=1e-2)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_train_kg)

    p = sub.add_parser("train-agent", help="train the actor-critic policy")
    p.add_argument("--data")
    _add_split_flags(p)
    p.add_argument("--features", default="structured",
                   help="'structured', 'random', or 'pretrained:<path>'")
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--kg-model")
    p.add_argument("--kg-mode", choices=list(agent_mod.KG_MODES), default="none")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--distractors", type=int, default=1)
    p.add_argument("--envs", type=int, default=128)
    p.add_argument("--unroll", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--entropy-coef", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=3_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reward", choices=["sparse", "shaped"], default="sparse")
    p.add_argument("--key-dim", type=int, default=300)
    p.add_argument("--value-dim", type=int, default=300)
    p.add_argument("--hidden-dim", type=int, default=300)
    p.add_argument("--metrics-interval", type=int, default=8192)
    p.add_argument("--eval-interval", type=int, default=0)
    p.add_argument("--eval-tasks", type=int, default=200)
    p.add_argument("--metrics")
    p.add_argument("--out")
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_train_agent)

    p = sub.add_parser("eval", help="evaluate a policy on fresh tasks")
    p.add_argument("--data")
    _add_split_flags(p)
    p.add_argument("--policy", required=True,
                   help="'random', 'oracle', 'kg-greedy', or 'net:<checkpoint>'")
    p.add_argument("--kg-model")
    p.add_argument("--kg-mode", choices=list(agent_mod.KG_MODES), default="none")
    p.add_argument("--score-subset", choices=["both", "combinesWith", "componentOf"],
                   default="both")
    p.add_argument("--features", default="structured")
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--partition", choices=["train", "test"], default="test")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--distractors", type=int, default=1)
    p.add_argument("--tasks", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="append an aggregate row to this CSV")
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render success curves from metric streams")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output figure (.svg)")
    p.add_argument("--plot-split", choices=["train", "test"], default="test")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("serve", help="run the human-play HTTP service")
    p.add_argument("--data")
    _add_split_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--log-dir")
    p.set_defaults(func=cmd_serve)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Inject config-file values as defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    with open(path, "r", encoding="utf-8") as f:
        values = json.load(f)
    remainder = argv[:idx] + argv[idx + 2:]
    if not remainder:
        return remainder
    command = remainder[0]
    injected = []
    for key, value in values.items():
        flag = "--" + key.replace("_", "-")
        if flag in remainder:
            continue
        if isinstance(value, bool):
            if value:
                injected.append(flag)
        elif isinstance(value, list):
            injected.append(flag)
            injected.extend(str(v) for v in value)
        else:
            injected.extend([flag, str(value)])
    return [command] + injected + remainder[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        args.func(args)
    except CraftbenchError as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(json.dumps({"error": f"missing file: {e.filename}"}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

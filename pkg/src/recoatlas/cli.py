"""Command-line entry point: ``recoatlas <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .behavior.ppmi import PpmiGraph, build_ppmi_graph, extract_copurchase_pairs
from .behavior.training import QueryPair, TrainConfig, train_complementarity, train_query_head
from .catalog import (Catalog, FilterConfig, InteractionTable, RawItem, RawReview, filter_catalog,
                      filter_interactions, split_users)
from .corruption import FaultConfig
from .embeddings import ItemMatrix, embed_items
from .env import ENV_VERSION, BenchEnv, provider_from_spec, split_query_pairs
from .errors import ConfigError, RecoAtlasError
from .records import read_jsonl, write_jsonl


def _env_meta(d: Path) -> dict:
    p = d / "env.json"
    return json.loads(p.read_text()) if p.exists() else {"version": ENV_VERSION}


def _write_env_meta(d: Path, meta: dict) -> None:
    (d / "env.json").write_text(json.dumps(meta, indent=2))


def _train_cfg(args) -> TrainConfig:
    prefix = "comp" if args.command == "train-comp" else "query"
    overrides = {f"{prefix}_{name}": getattr(args, name) for name in ("epochs", "lr", "batch_size")}
    overrides["seed"] = args.seed
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


# ---------------------------------------------------------------- pipeline stages

def cmd_build_catalog(args) -> int:
    cfg = FilterConfig(heldout_user_frac=args.heldout_frac, split_seed=args.split_seed, max_users=args.max_users)
    items = [RawItem.from_dict(d) for d in read_jsonl(args.items)]
    reviews = [RawReview.from_dict(d) for d in read_jsonl(args.reviews)]
    catalog = filter_catalog(items, reviews, cfg)
    interactions = filter_interactions(reviews, catalog, cfg)
    train, heldout = split_users(interactions, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "catalog.jsonl", catalog.to_records())
    write_jsonl(out / "train.jsonl", train.to_records())
    write_jsonl(out / "heldout.jsonl", heldout.to_records())
    _write_env_meta(out, {**_env_meta(out), "filter": asdict(cfg)})
    print(f"catalog: {len(catalog)} items; interactions: {len(train)} train / {len(heldout)} held-out rows")
    return 0


def cmd_embed(args) -> int:
    d = Path(args.env)
    spec = {"kind": args.provider, "dim": args.dim, "seed": args.embed_seed}
    if args.provider == "remote":
        spec = {"kind": "remote", "dim": args.dim, "endpoint": args.endpoint, "model": args.model}
    catalog = Catalog.from_records(read_jsonl(d / "catalog.jsonl"))
    matrix = embed_items(catalog, provider_from_spec(spec))
    matrix.save(d / "embeddings.npz")
    _write_env_meta(d, {**_env_meta(d), "provider": spec})
    print(f"embedded {len(matrix)} items into {matrix.dim} dimensions")
    return 0


def cmd_build_ppmi(args) -> int:
    d = Path(args.env)
    train = InteractionTable.from_records(read_jsonl(d / "train.jsonl"))
    graph = build_ppmi_graph(extract_copurchase_pairs(train.positives, args.window_days), args.threshold)
    graph.save(d / "ppmi.tsv")
    print(f"PPMI graph: {len(graph.edges)} edges")
    return 0


def cmd_train_comp(args) -> int:
    d = Path(args.env)
    pair = train_complementarity(PpmiGraph.load(d / "ppmi.tsv"), ItemMatrix.load(d / "embeddings.npz"), _train_cfg(args))
    pair.save(d / "complement.npz")
    print(f"complement heads saved; validation recall@5 {pair.meta['val_recall@5']:.4f}")
    return 0


def cmd_train_query(args) -> int:
    d = Path(args.env)
    cfg = _train_cfg(args)
    pairs = [QueryPair(r["query"], r["item_id"], r.get("user_id", "")) for r in read_jsonl(args.pairs)]
    train_pairs, val_pairs = split_query_pairs(pairs, cfg.anchor_val_frac, cfg.seed)
    catalog = Catalog.from_records(read_jsonl(d / "catalog.jsonl"))
    provider = provider_from_spec(_env_meta(d)["provider"])
    train = InteractionTable.from_records(read_jsonl(d / "train.jsonl"))
    head = train_query_head(train_pairs, val_pairs, ItemMatrix.load(d / "embeddings.npz"), provider, catalog, train, cfg)
    head.save(d / "query_head.npz")
    print(f"query head saved; validation subcategory match@5 {head.meta['val_subcat_match@5']:.4f}")
    return 0


def cmd_synth(args) -> int:
    from .bench.queries import save_query_file
    from .bench.synthetic import WorldConfig, make_tasks, query_pairs
    from .env import build_synthetic_env

    env, world = build_synthetic_env(WorldConfig(seed=args.seed), dim=args.dim)
    out = Path(args.out)
    env.save(out)
    tasks = make_tasks(world, env.heldout, env.catalog.ids, n_bundle=args.tasks, n_comparative=args.tasks, seed=args.seed)
    save_query_file(out / "queries.jsonl", tasks)
    write_jsonl(out / "raw_items.jsonl", (asdict(i) for i in world.raw_items))
    write_jsonl(out / "raw_reviews.jsonl", (asdict(r) for r in world.raw_reviews))
    write_jsonl(out / "query_pairs.jsonl", (asdict(p) for p in query_pairs(world, env.train, seed=args.seed)))
    print(f"synthetic environment in {out}: {len(env.catalog)} items, {len(tasks)} tasks")
    return 0


# ---------------------------------------------------------------- benchmark

def make_policy_factory(spec: str, k: int, args):
    """Return ``(model_id, factory)`` for ``scripted:<name>`` or ``chat:<endpoint>``."""
    kind, _, value = spec.partition(":")
    if kind == "scripted":
        from .agent.policies import make_scripted
        make_scripted(value, k)  # fail fast on unknown names
        return value, lambda: make_scripted(value, k)
    if kind == "chat":
        from .agent.chat import ChatConfig, ChatPolicy
        cfg = ChatConfig.from_env(value or None, **({"model": args.chat_model} if args.chat_model else {}))
        return f"chat:{cfg.model}", lambda: ChatPolicy(cfg)
    raise ConfigError(f"policy must be scripted:<name> or chat:<endpoint>, got {spec!r}")


def cmd_run(args) -> int:
    from .bench.queries import load_query_file
    from .bench.sweep import env_matrix, run_sweep

    env = BenchEnv.load(args.env)
    instances = load_query_file(args.queries)
    if args.limit:
        instances = instances[: args.limit]
    faults = FaultConfig.from_file(args.fault_config) if args.fault_config else FaultConfig()
    policies = dict(make_policy_factory(p, args.k, args) for p in args.policy)
    rates = args.faulty_rate or [0.0]
    rows = run_sweep(instances, env, policies, env_matrix(args.variant, rates), args.out, args.workers,
                     K=args.k, budget=args.budget, faults=faults, seed=args.seed)
    failed = sum(1 for r in rows if r.get("failed"))
    print(f"{len(rows)} result rows in {args.out} ({failed} failed episodes)")
    return 0


def cmd_aggregate(args) -> int:
    from .bench.aggregate import aggregate, render
    from .bench.sweep import load_results

    rows = load_results(args.input)
    if not rows:
        print(f"no results found in {args.input}", file=sys.stderr)
        return 1
    print(render(aggregate(rows), args.format))
    return 0


def cmd_judge_prompts(args) -> int:
    from .bench.judge import render_judge_prompts
    from .bench.queries import load_query_file
    from .scoring import Report

    catalog = Catalog.from_records(read_jsonl(Path(args.env) / "catalog.jsonl"))
    queries = {q.key: q for q in load_query_file(args.queries)}
    out = []
    for rec in read_jsonl(Path(args.input) / "traces.jsonl"):
        if "report" not in rec or rec["key"] not in queries:
            continue
        report = Report.from_obj(rec["report"])
        quality, explanation = render_judge_prompts(queries[rec["key"]].query, report, catalog,
                                                    rec.get("observed_ids"), args.k)
        out.append({"key": rec["key"], "model": rec["model"], "variant": rec["variant"], "rate": rec["rate"],
                    "quality": quality, "explanation": explanation})
    write_jsonl(args.out, out)
    print(f"rendered judge prompts for {len(out)} reports into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recoatlas", description="Behavior-grounded shopping-agent benchmark toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-catalog", help="filter raw item/review dumps into a catalog and user split")
    s.add_argument("--items", required=True)
    s.add_argument("--reviews", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--heldout-frac", type=float, default=0.10)
    s.add_argument("--split-seed", type=int, default=42)
    s.add_argument("--max-users", type=int)
    s.set_defaults(func=cmd_build_catalog)

    s = sub.add_parser("embed", help="embed catalog product texts")
    s.add_argument("--env", required=True)
    s.add_argument("--provider", choices=["hashing", "remote"], default="hashing")
    s.add_argument("--dim", type=int, default=256)
    s.add_argument("--embed-seed", type=int, default=0)
    s.add_argument("--endpoint")
    s.add_argument("--model")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("build-ppmi", help="build the co-purchase PPMI graph from training users")
    s.add_argument("--env", required=True)
    s.add_argument("--window-days", type=int, default=0)
    s.add_argument("--threshold", type=float, default=0.0)
    s.set_defaults(func=cmd_build_ppmi)

    for name, func, helptext in (("train-comp", cmd_train_comp, "train the anchor/complement projection pair"),
                                 ("train-query", cmd_train_query, "train the query head")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--env", required=True)
        s.add_argument("--seed", type=int)
        s.add_argument("--epochs", type=int)
        s.add_argument("--lr", type=float)
        s.add_argument("--batch-size", type=int)
        if name == "train-query":
            s.add_argument("--pairs", required=True, help="JSONL of {query, item_id, user_id}")
        s.set_defaults(func=func)

    s = sub.add_parser("synth", help="generate and build a synthetic environment with query tasks")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dim", type=int, default=256)
    s.add_argument("--tasks", type=int, default=120, help="tasks per task type")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="run agent episodes and score them")
    s.add_argument("--env", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--variant", choices=["semantic", "utility"], action="append")
    s.add_argument("--faulty-rate", type=float, action="append")
    s.add_argument("--fault-config")
    s.add_argument("--policy", action="append", required=True, help="scripted:<name> or chat:<endpoint>")
    s.add_argument("--chat-model")
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--budget", type=int, default=10)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--limit", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("aggregate", help="leaderboard and retention from a results directory")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=["table", "csv", "plotdata"], default="table")
    s.set_defaults(func=cmd_aggregate)

    s = sub.add_parser("judge-prompts", help="render semantic-judge prompts for every report in a run")
    s.add_argument("--env", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_judge_prompts)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if getattr(args, "variant", None) is None and args.command == "run":
        args.variant = ["utility"]
    try:
        return args.func(args)
    except (RecoAtlasError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

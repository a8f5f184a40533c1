"""Command-line entry point: synth, train, eval, ablate, mi, route, serve."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("lookahead")

LOOKAHEAD_KINDS = ("mlm", "clm")
CLASSIFIER_KINDS = ("mlc", "zooter", "response-oracle")
SIMILARITY_KINDS = ("knn", "kmeans")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------- helpers

def _load_split(corpus: str):
    from .corpus import CorpusSplit, load_corpus

    root = Path(corpus)
    parts = []
    for name in ("train", "validation", "test"):
        f = root / f"{name}.jsonl"
        parts.append(load_corpus(f) if f.exists() else [])
    return CorpusSplit(*parts)


def _eval_records(args):
    from .corpus import load_corpus

    if args.data:
        return load_corpus(args.data)
    return _load_split(args.corpus).test


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace, seed=None, corpus=None) -> Path:
    from .corpus import corpus_digest

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "arguments": {k: v for k, v in vars(args).items() if k != "func"},
                "seed": seed, "version": __version__,
                "corpus_digest": corpus_digest(corpus) if corpus is not None else None}
    path = out_dir / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _config_from_args(args, n_models: int):
    from .framework import LookaheadConfig

    variant = args.variant if args.variant in LOOKAHEAD_KINDS else ("clm" if args.backbone == "clm" else "mlm")
    kw = dict(variant=variant, n_models=n_models, n_layers=args.n_layers, d_model=args.d_model,
              n_heads=args.n_heads, d_ff=args.d_ff, max_len=args.max_len, soft_labels=args.soft_labels,
              threshold=args.threshold)
    if args.lam is not None:
        kw["lam"] = args.lam
    for name in ("m", "alpha", "strategy"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    return LookaheadConfig(**kw)


def build_untrained(args, n_models: int):
    from .baselines import BackboneEmbedder, KMeansRouter, KNNRouter, MLCRouter, ZooterRouter
    from .evalkit import ResponseOracleClassifier
    from .framework import build_router

    if args.variant in SIMILARITY_KINDS:
        emb = BackboneEmbedder(d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads, seed=args.seed)
        k = args.k if args.k is not None else (100 if args.variant == "knn" else 8)
        return KNNRouter(emb, k) if args.variant == "knn" else KMeansRouter(emb, k, args.seed)
    cfg = _config_from_args(args, n_models)
    if args.variant == "mlc":
        return MLCRouter(cfg, seed=args.seed)
    if args.variant == "zooter":
        return ZooterRouter(cfg, seed=args.seed, tau=args.tau if args.tau is not None else 1.0)
    if args.variant == "response-oracle":
        return ResponseOracleClassifier(cfg, seed=args.seed)
    return build_router(cfg, seed=args.seed)


def _check_train_flags(args) -> None:
    v = args.variant
    if v != "mlm" and (args.m is not None or args.alpha is not None or args.strategy is not None):
        raise UsageError(f"--m/--alpha/--strategy apply to --variant mlm only, not {v}")
    if v not in LOOKAHEAD_KINDS and args.lam is not None:
        raise UsageError(f"--lam applies to lookahead variants only, not {v}")
    if v != "zooter" and args.tau is not None:
        raise UsageError("--tau applies to --variant zooter only")
    if v not in SIMILARITY_KINDS and args.k is not None:
        raise UsageError("--k applies to --variant knn/kmeans only")
    if args.backbone is not None and v not in CLASSIFIER_KINDS:
        raise UsageError("--backbone applies to classifier variants only")
    if args.backbone is None:
        args.backbone = "mlm"


def _train_one(args, split, out_dir: Path | None = None):
    from .framework import TrainConfig, train

    router = build_untrained(args, split.train[0].n_models)
    if args.variant in SIMILARITY_KINDS:
        router.fit(split.train)
        return router, None
    epochs = args.epochs if args.epochs is not None else (2 if args.variant == "clm" else 4)
    tc = TrainConfig(epochs=epochs, batch_size=args.batch_size, lr=args.lr, weight_decay=args.weight_decay,
                     warmup_fraction=args.warmup, eval_every=args.eval_every, seed=args.seed,
                     max_steps=args.max_steps)
    train_set = split.train[: max(1, int(round(len(split.train) * args.fraction)))]
    result = train(router, train_set, split.validation, tc)
    return router, result


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    from .corpus import SpecializationPlan, generate_synthetic, make_plan, save_corpus

    plan = SpecializationPlan.load(args.plan) if args.plan else make_plan(seed=args.seed)
    split = generate_synthetic(plan, args.n_train, args.n_val, args.n_test, seed=args.seed,
                               threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        save_corpus(part, out / f"{name}.jsonl")
    (out / "plan.json").write_text(plan.to_json() + "\n", encoding="utf-8")
    (out / "oracle_best.json").write_text(json.dumps(split.oracle_best, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "synth", args, args.seed, split.train + split.validation + split.test)
    print(f"synth\t{len(split.train)}\t{len(split.validation)}\t{len(split.test)}\t{out}")
    return 0


def cmd_train(args) -> int:
    from .gateway.checkpoint import save_checkpoint
    from .plotting import training_curve_figure

    _check_train_flags(args)
    split = _load_split(args.corpus)
    if not split.train:
        raise UsageError(f"{args.corpus}: no training records")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    router, result = _train_one(args, split)
    save_checkpoint(router, out, validation=split.validation or None)
    if result is not None:
        log_path = out.with_suffix(".log.tsv")
        result.write_log(log_path)
        rows = result.log
        training_curve_figure([r.step for r in rows], [r.train_loss for r in rows], [r.val_acc for r in rows],
                              out.with_suffix(".curve.png"))
        print(f"train\t{args.variant}\tbest_step={result.best_step}\tval_acc={result.best_val_acc:.4f}\t{out}")
    else:
        print(f"train\t{args.variant}\tfitted\t{out}")
    write_manifest(out.parent, f"train-{out.stem}", args, args.seed, split.train)
    return 0


def _named_router(spec: str, n_models: int, seed: int):
    from .baselines import OracleRouter, RandomRouter
    from .gateway.checkpoint import load_checkpoint

    if spec == "oracle":
        return OracleRouter()
    if spec == "random":
        return RandomRouter(n_models, seed)
    return load_checkpoint(spec)


def cmd_eval(args) -> int:
    from .evalkit import evaluate, select
    from .plotting import routing_proportions_figure

    records = _eval_records(args)
    if not records:
        raise UsageError("evaluation corpus is empty")
    t = records[0].n_models
    router = _named_router(args.router, t, args.seed)
    base_sel = None
    if args.baseline:
        base_sel = select(_named_router(args.baseline, t, args.seed), records)
    name = args.name or (args.router if args.router in ("oracle", "random") else Path(args.router).stem)
    report = evaluate(router, records, name=name, baseline_selections=base_sel)
    stem = Path(args.out)
    stem.parent.mkdir(parents=True, exist_ok=True)
    report.write(stem)
    routing_proportions_figure({name: report.proportions}, [f"model-{i + 1}" for i in range(t)],
                               stem.with_suffix(".proportions.png"))
    write_manifest(stem.parent, f"eval-{stem.stem}", args, args.seed, records)
    print(report.tsv_header())
    print(report.tsv_row())
    return 0


def cmd_ablate(args) -> int:
    from .evalkit import evaluate
    from .plotting import ablation_figure

    split = _load_split(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    arms = []
    if args.sweep in ("lambda", "both"):
        arms += [("lam", lam, "end") for lam in args.lams]
    if args.sweep in ("strategy", "both"):
        arms += [("strategy", args.lam_default, s) for s in args.strategies]
    lines = ["arm\tlam\tstrategy\tseed\tmu_n\tmu_o"]
    summary = []
    for kind, lam, strategy in arms:
        label = f"lam={lam:g}" if kind == "lam" else strategy
        vals = []
        for seed in args.seeds:
            ns = argparse.Namespace(**{**vars(args), "variant": "mlm", "lam": lam, "strategy": strategy,
                                       "seed": seed, "m": args.m, "alpha": args.alpha, "backbone": "mlm",
                                       "tau": None, "k": None, "fraction": 1.0})
            router, _ = _train_one(ns, split)
            rep = evaluate(router, split.test, name=label)
            allb = rep.benchmark("all")
            vals.append(allb.mu_n)
            lines.append(f"{label}\t{lam:g}\t{strategy}\t{seed}\t{allb.mu_n:.2f}\t{allb.mu_o:.4f}")
            print(lines[-1], flush=True)
        summary.append((label, float(np.mean(vals)), float(np.std(vals))))
    (out / "ablation.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    ablation_figure(summary, out / "ablation.png")
    write_manifest(out, "ablate", args, args.seeds, split.train)
    return 0


def cmd_mi(args) -> int:
    from .evalkit import MineConfig, mi_probe
    from .gateway.checkpoint import load_checkpoint
    from .plotting import mi_boxplot

    records = _eval_records(args)
    res = mi_probe(load_checkpoint(args.with_rm), load_checkpoint(args.without_rm), load_checkpoint(args.oracle),
                   records, MineConfig(hidden=args.hidden, epochs=args.epochs, batch_size=args.batch_size,
                                       lr=args.lr, repetitions=args.reps, seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["probe\trep\testimate"]
    for name, r in (("with_rm", res.with_rm), ("without_rm", res.without_rm)):
        lines += [f"{name}\t{i}\t{v:.6f}" for i, v in enumerate(r.estimates)]
    (out / "mi.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    mi_boxplot({"w/ RM": res.with_rm.estimates.tolist(), "w/o RM": res.without_rm.estimates.tolist()},
               out / "mi.png")
    write_manifest(out, "mi", args, args.seed, records)
    for name, r in (("with_rm", res.with_rm), ("without_rm", res.without_rm)):
        q1, q3 = r.iqr
        print(f"{name}\tmedian={r.median:.4f}\tq1={q1:.4f}\tq3={q3:.4f}")
    return 0


def cmd_route(args) -> int:
    from .gateway.checkpoint import load_checkpoint

    router = load_checkpoint(args.checkpoint)
    query = sys.stdin.read().rstrip("\n") if args.query is None else args.query
    d = router.route(query)
    print(json.dumps({"index": d.index, "scores": [float(s) for s in d.scores], "router_latency_ms": d.latency_ms}))
    return 0


def cmd_serve(args) -> int:
    from .gateway.server import serve

    serve(args.config)
    return 0


# ------------------------------------------------------------------ parser

def _model_flags(p) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--n-layers", type=int, default=4)
    g.add_argument("--d-model", type=int, default=128)
    g.add_argument("--n-heads", type=int, default=4)
    g.add_argument("--d-ff", type=int, default=512)
    g.add_argument("--max-len", type=int, default=512)
    g.add_argument("--threshold", type=float, default=0.8)
    g.add_argument("--soft-labels", action="store_true")
    t = p.add_argument_group("training")
    t.add_argument("--epochs", type=int, default=None, help="default 2 for clm, 4 otherwise")
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--weight-decay", type=float, default=0.01)
    t.add_argument("--warmup", type=float, default=0.1)
    t.add_argument("--eval-every", type=int, default=100)
    t.add_argument("--max-steps", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lookahead", description="Response-aware LLM routing")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a planted-specialist corpus")
    s.add_argument("--plan", help="plan file (full plan or generator keyword arguments)")
    s.add_argument("--out", required=True)
    s.add_argument("--n-train", type=int, default=5000)
    s.add_argument("--n-val", type=int, default=500)
    s.add_argument("--n-test", type=int, default=1000)
    s.add_argument("--threshold", type=float, default=0.8)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a router and write a checkpoint")
    t.add_argument("--variant", choices=LOOKAHEAD_KINDS + CLASSIFIER_KINDS + SIMILARITY_KINDS, default="mlm")
    t.add_argument("--corpus", required=True, help="directory with train/validation/test.jsonl")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lam", type=float, default=None, help="default 0.2 (mlm) or 0.5 (clm)")
    t.add_argument("--m", type=int, default=None, help="MID tokens per block (default 64)")
    t.add_argument("--alpha", type=float, default=None, help="curriculum fraction (default 0.4)")
    t.add_argument("--strategy", choices=("end", "start", "random", "none"), default=None)
    t.add_argument("--tau", type=float, default=None)
    t.add_argument("--k", type=int, default=None)
    t.add_argument("--backbone", choices=("mlm", "clm"), default=None, help="classifier encoder type")
    t.add_argument("--fraction", type=float, default=1.0, help="share of training records used")
    _model_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or reference router")
    e.add_argument("--router", required=True, help="checkpoint path, 'oracle' or 'random'")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="JSONL records")
    src.add_argument("--corpus", help="corpus directory (its test split is used)")
    e.add_argument("--baseline", help="second router for the win/tie/loss table")
    e.add_argument("--name")
    e.add_argument("--out", required=True, help="output stem (.jsonl/.tsv/.png)")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="lambda and masking-strategy sweeps")
    a.add_argument("--corpus", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--sweep", choices=("lambda", "strategy", "both"), default="both")
    a.add_argument("--lams", type=float, nargs="+", default=[0.0, 0.2])
    a.add_argument("--lam-default", type=float, default=0.2)
    a.add_argument("--strategies", nargs="+", default=["end", "start", "none"],
                   choices=("end", "start", "random", "none"))
    a.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    a.add_argument("--m", type=int, default=64)
    a.add_argument("--alpha", type=float, default=0.4)
    _model_flags(a)
    a.set_defaults(func=cmd_ablate)

    m = sub.add_parser("mi", help="mutual-information probe")
    m.add_argument("--with-rm", required=True)
    m.add_argument("--without-rm", required=True)
    m.add_argument("--oracle", required=True)
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--corpus")
    m.add_argument("--out", required=True)
    m.add_argument("--reps", type=int, default=50)
    m.add_argument("--hidden", type=int, default=1024)
    m.add_argument("--epochs", type=int, default=100)
    m.add_argument("--batch-size", type=int, default=512)
    m.add_argument("--lr", type=float, default=1e-4)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_mi)

    r = sub.add_parser("route", help="route one query (argument or stdin)")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--query")
    r.set_defaults(func=cmd_route)

    v = sub.add_parser("serve", help="run the HTTP gateway")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error\tusage\t{exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error\tusage\t{exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as one machine-parsable line
        msg = " ".join(str(exc).split())
        print(f"error\t{type(exc).__name__}\t{msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

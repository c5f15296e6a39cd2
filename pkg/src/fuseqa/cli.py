"""Command-line entry point.

Exit codes: 0 success, 1 check/assertion failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .context import EmbeddingTable, PseudoEncoder, TableEncoder, build_context
from .data import DatasetError, load_dataset, make_synthetic_task
from .kg import KGError, load_bundle, load_templates, load_triples, relation_stats, write_bundle
from .kg import TemplateTable
from .model import FusionModel, ModelConfig
from .training import (
    TrainingError,
    evaluate,
    format_ablation_table,
    prepare_examples,
    run_ablation,
    train,
)


class UsageError(Exception):
    pass


def _load_kg(path: str):
    """Accept either a bundle file or a raw triples file."""
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
    if first == "# fuseqa-kg-bundle v1":
        return load_bundle(path)
    return load_triples(path), TemplateTable()


def _make_encoder(cfg):
    if cfg.scoring.embedding_table:
        table = EmbeddingTable.load(cfg.scoring.embedding_table)
        return TableEncoder(table, fallback=cfg.scoring.table_fallback)
    return PseudoEncoder(dim=cfg.scoring.encoder_dim)


def _load_data(cfg):
    """(kg, templates, train examples, test examples) from the data section."""
    if cfg.data.dataset == "synthetic":
        total = cfg.data.n_train + cfg.data.n_test
        kg, templates, examples = make_synthetic_task(
            total, cfg.data.kg_size, cfg.data.seed, n_noise_edges=cfg.data.noise_edges
        )
        return kg, templates, examples[: cfg.data.n_train], examples[cfg.data.n_train :]
    if not cfg.kg.bundle and not cfg.kg.triples:
        raise UsageError("config kg section needs a bundle or triples path")
    if cfg.kg.bundle:
        kg, templates = load_bundle(cfg.kg.bundle)
    else:
        kg = load_triples(cfg.kg.triples)
        templates = load_templates(cfg.kg.templates, kg) if cfg.kg.templates else TemplateTable()
    train_ex = load_dataset(cfg.data.dataset)
    test_ex = load_dataset(cfg.data.test_dataset) if cfg.data.test_dataset else train_ex
    return kg, templates, train_ex, test_ex


def _model_config(cfg, kg) -> ModelConfig:
    mc = cfg.model
    if mc.n_relations < kg.n_relations:
        mc.n_relations = kg.n_relations
    return mc


def cmd_build_kg(args) -> int:
    kg = load_triples(args.triples)
    templates = load_templates(args.templates, kg) if args.templates else TemplateTable()
    write_bundle(kg, templates, args.out)
    print(f"entities={kg.n_entities} relations={kg.n_relations} triplets={len(kg.triplets)}")
    return 0


def cmd_context(args) -> int:
    cfg = load_config(args.config)
    kg, templates = _load_kg(args.kg)
    if args.lam is not None:
        cfg.scoring.lam = args.lam
    stats = relation_stats(kg)
    ctx = build_context(
        args.question, args.choice, kg, templates, _make_encoder(cfg), stats,
        cfg.context_config(),
    )
    sys.stdout.write(ctx.serialize())
    return 0


def _prepare_all(cfg, kg, templates, train_ex, test_ex, mc):
    encoder = _make_encoder(cfg)
    stats = relation_stats(kg)
    cc = cfg.context_config()
    prep_train = prepare_examples(train_ex, kg, templates, encoder, stats, cc, mc)
    prep_test = prepare_examples(test_ex, kg, templates, encoder, stats, cc, mc)
    return prep_train, prep_test


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    kg, templates, train_ex, test_ex = _load_data(cfg)
    mc = _model_config(cfg, kg)
    model = FusionModel(mc)
    prep_train, prep_test = _prepare_all(cfg, kg, templates, train_ex, test_ex, mc)
    model, train_metrics = train(model, prep_train, cfg.train)
    os.makedirs(args.out_dir, exist_ok=True)
    model.save(os.path.join(args.out_dir, "checkpoint.txt"))
    with open(os.path.join(args.out_dir, "loss_curve.txt"), "w", encoding="utf-8") as f:
        f.writelines(f"{v!r}\n" for v in train_metrics.loss_curve)
    test_metrics = evaluate(model, prep_test)
    with open(os.path.join(args.out_dir, "metrics.jsonl"), "w", encoding="utf-8") as f:
        f.write(test_metrics.serialize())
    print(f"train_accuracy={train_metrics.accuracy:.4f} test_accuracy={test_metrics.accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    if not os.path.exists(args.checkpoint):
        print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 2
    cfg = load_config(args.config)
    model = FusionModel.load(args.checkpoint)
    kg, templates, _train_ex, test_ex = _load_data(cfg)
    _, prep_test = _prepare_all(cfg, kg, templates, [], test_ex, model.config)
    metrics = evaluate(model, prep_test)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(metrics.serialize())
    print(f"accuracy={metrics.accuracy:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    kg, templates, train_ex, test_ex = _load_data(cfg)
    mc = _model_config(cfg, kg)
    cells = run_ablation(
        train_ex, test_ex, kg, templates, mc, cfg.train, cfg.context_config(),
        hops=tuple(args.hops),
    )
    table = format_ablation_table(cells)
    sys.stdout.write(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(table)
    return 1 if any(c.error for c in cells) else 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_all

    results = run_all()
    failed = False
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name:<35} max_rel_err={r.max_error:.3e}  tol={r.tolerance:.0e}  {status}")
        failed = failed or not r.ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuseqa")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-kg", help="validate triple/template files into a bundle")
    b.add_argument("--triples", required=True)
    b.add_argument("--templates", default="")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_kg)

    c = sub.add_parser("context", help="print the ranked knowledge context for one question/choice")
    c.add_argument("--kg", required=True, help="bundle or triples file")
    c.add_argument("--question", required=True)
    c.add_argument("--choice", default="")
    c.add_argument("--config", default=None)
    c.add_argument("--lambda", dest="lam", type=float, default=None)
    c.set_defaults(func=cmd_context)

    t = sub.add_parser("train", help="train a fusion model")
    t.add_argument("--config", default=None)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config", default=None)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", default="")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run the fusion-mode x hop grid")
    a.add_argument("--config", default=None)
    a.add_argument("--out", default="")
    a.add_argument("--hops", type=int, nargs="+", default=[1, 3])
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("selfcheck", help="run the gradient-check suite")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KGError, DatasetError, ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands mirror the pipeline stages plus the analysis protocols; every
command takes ``--config`` (default ``e2v.toml``) and exits with 0 on
success, 2 on configuration errors, 3 on missing prerequisites, 4 on
remote-service failures, and 5 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from .analysis import (
    best_tail_average,
    feature_budget_sweep,
    missing_ratio_sweep,
    overlap_matrix,
    saturation_dimension,
    tsne,
)
from .annotate import AttributeTag
from .config import ProjectConfig, load_config
from .dataset import fit_standardizer, kfold, load_property_table, make_split
from .embed import VariantDescriptor
from .errors import (
    ConfigError,
    E2vError,
    MissingPrerequisiteError,
    NumericalError,
    RemoteServiceError,
)
from .models import fit_linear, rank_features
from .ttt import ttt_impute


def parse_variant(spec: str) -> VariantDescriptor:
    """Parse CLI variant specs.

    ``global``; ``local:ARF:0.05:front``; ``aggregated:0.05:front``.
    """
    parts = spec.split(":")
    kind = parts[0]
    if kind == "global":
        return VariantDescriptor(kind="global")
    if kind == "local":
        if len(parts) != 4:
            raise E2vError("local variant spec is local:<TAG>:<ratio>:<placement>")
        return VariantDescriptor(
            kind="local",
            attribute=AttributeTag(parts[1]),
            summary_ratio=float(parts[2]),
            placement=parts[3],
        )
    if kind == "aggregated":
        if len(parts) != 3:
            raise E2vError("aggregated variant spec is aggregated:<ratio>:<placement>")
        return VariantDescriptor(
            kind="aggregated", summary_ratio=float(parts[1]), placement=parts[2]
        )
    raise E2vError(f"unknown variant kind {kind!r}")


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, sort_keys=True) if args.json else text)


def _load(args) -> ProjectConfig:
    return load_config(args.config)


def _matrix_for(config, variant_spec: str, property_name: str):
    variant = parse_variant(variant_spec)
    vectors = pipeline.load_variant_vectors(config, variant)
    table = pipeline.load_property(config, property_name)
    symbols = [s for s in sorted(vectors, key=lambda s: s) if table.value_of(s) is not None]
    if len(symbols) < 2:
        raise E2vError(f"property {property_name!r} has {len(symbols)} usable elements")
    X = np.stack([vectors[s] for s in symbols])
    y = np.array([table.value_of(s) for s in symbols])
    return symbols, X, y, vectors, table


def cmd_ingest(args) -> int:
    config = _load(args)
    if args.corpus:
        config = replace(config, corpus_dir=Path(args.corpus).resolve())
    status = pipeline.stage_ingest(
        config, force=args.force, fetch=args.fetch, url_template=args.url_template
    )
    records = pipeline.read_elements(pipeline.elements_path(config))
    _emit(
        args,
        {"stage": "ingest", "status": status, "elements": len(records)},
        f"ingest: {status} ({len(records)} elements)",
    )
    return 0


def cmd_tag(args) -> int:
    config = _load(args)
    if args.corpus:
        config = replace(config, corpus_dir=Path(args.corpus).resolve())
    if args.remote:
        config = replace(config, annotate=replace(config.annotate, remote=True))
    status = pipeline.stage_tag(config, force=args.force, out_dir=args.out)
    _emit(args, {"stage": "tag", "status": status}, f"tag: {status}")
    return 0


def cmd_summarize(args) -> int:
    config = _load(args)
    annotate = config.annotate
    if args.ratio is not None:
        annotate = replace(annotate, ratios=(args.ratio,))
    if args.remote:
        annotate = replace(annotate, remote=True)
    config = replace(config, annotate=annotate)
    status = pipeline.stage_summarize(config, force=args.force)
    _emit(args, {"stage": "summarize", "status": status}, f"summarize: {status}")
    return 0


def cmd_embed(args) -> int:
    config = _load(args)
    annotate, provider = config.annotate, config.provider
    if args.ratios:
        annotate = replace(annotate, ratios=tuple(float(r) for r in args.ratios.split(",")))
    if args.placements:
        annotate = replace(annotate, placements=tuple(args.placements.split(",")))
    if args.provider:
        provider = replace(provider, kind=args.provider)
    if args.dim is not None:
        provider = replace(provider, dim=args.dim)
    if args.seed is not None:
        provider = replace(provider, seed=args.seed)
    config = replace(config, annotate=annotate, provider=provider)
    kinds = tuple(args.variants.split(","))
    status = pipeline.stage_embed(config, force=args.force, kinds=kinds)
    _emit(args, {"stage": "embed", "status": status}, f"embed: {status}")
    return 0


def cmd_run(args) -> int:
    config = _load(args)
    stages = args.stages.split(",") if args.stages else list(pipeline.STAGES)
    manifest = pipeline.run_pipeline(
        config, stages, force=args.force, fetch=args.fetch, url_template=args.url_template
    )
    _emit(
        args,
        {"stages": manifest["stages"], "artifacts": len(manifest["artifacts"])},
        "; ".join(f"{k}: {v}" for k, v in manifest["stages"].items()),
    )
    return 0


def cmd_data_validate(args) -> int:
    config = _load(args)
    properties_dir = Path(args.properties) if args.properties else config.properties_dir
    manifest = pipeline.read_manifest(config.corpus_dir / "manifest.csv")
    symbols = [e.symbol for e in manifest]
    summary = {}
    for path in sorted(properties_dir.glob("*.csv")):
        table = load_property_table(path, symbols)
        summary[table.name] = len(table.known_symbols())
    _emit(
        args,
        {"properties": summary},
        "\n".join(f"{name}: {count} known values" for name, count in summary.items()),
    )
    return 0


def cmd_entropy(args) -> int:
    config = _load(args)
    status = pipeline.stage_analyze(config, force=True)
    out = config.workdir / "reports" / "entropy_global.json"
    _emit(args, {"stage": "analyze", "status": status, "reports": str(out.parent)},
          f"analyze: {status}; reports under {out.parent}")
    return 0


def cmd_tsne(args) -> int:
    config = _load(args)
    variant = parse_variant(args.variant)
    vectors = pipeline.load_variant_vectors(config, variant)
    records = pipeline.read_elements(pipeline.elements_path(config))
    symbols = [r.symbol for r in records if r.symbol in vectors]
    X = np.stack([vectors[s] for s in symbols])
    perplexity = args.perplexity or config.analysis.tsne_perplexity
    projection = tsne(
        X,
        perplexity=perplexity,
        seed=config.analysis.base_seed,
        iterations=config.analysis.tsne_iterations,
    )
    payload = {
        "variant": args.variant,
        "perplexity": projection.perplexity,
        "seed": projection.seed,
        "iterations": projection.iterations,
        "final_kl": float(projection.kl_trace[-1]),
        "points": {
            s: [float(projection.coords[i, 0]), float(projection.coords[i, 1])]
            for i, s in enumerate(symbols)
        },
    }
    _write_output(args.out, payload)
    _emit(args, payload, f"t-SNE of {len(symbols)} points written to {args.out}")
    return 0


def cmd_budget(args) -> int:
    config = _load(args)
    symbols, X, y, _, _ = _matrix_for(config, args.variant, args.property)
    k = min(config.analysis.folds, len(symbols))
    folds = kfold(list(range(len(symbols))), k, config.analysis.base_seed)
    budgets = config.analysis.budgets(X.shape[1])
    curve = feature_budget_sweep(X, y, budgets, folds, tau=config.analysis.saturation_tau)
    payload = {
        "variant": args.variant,
        "property": args.property,
        "budgets": list(curve.budgets),
        "rmse": list(curve.rmse),
        "best_tail_average": curve.best_tail_average,
        "saturation_dim": curve.saturation_dim,
        "tau": curve.tau,
        "folds": k,
    }
    _write_output(args.out, payload)
    _emit(
        args,
        payload,
        f"budget curve for {args.property}: best-tail {curve.best_tail_average:.4f}, "
        f"saturation at {curve.saturation_dim}",
    )
    return 0


def cmd_sweep(args) -> int:
    config = _load(args)
    symbols, X, y, vectors, table = _matrix_for(config, args.variant, args.property)
    records = pipeline.read_elements(pipeline.elements_path(config))
    order = [r.symbol for r in records]
    ratios = (
        [float(r) for r in args.ratios.split(",")]
        if args.ratios
        else list(config.analysis.missing_ratios)
    )
    report = missing_ratio_sweep(
        vectors,
        table.known_values(),
        args.predictor,
        ratios,
        repeats=config.analysis.repeats,
        base_seed=config.analysis.base_seed,
        order=order,
        ttt_overrides={
            "model_dim": config.ttt.model_dim,
            "steps": config.ttt.steps,
            "step_size": config.ttt.step_size,
            "target_standardize": config.ttt.target_standardize,
        },
    )
    payload = {
        "variant": args.variant,
        "property": args.property,
        "predictor": report.predictor,
        "repeats": report.repeats,
        "points": [
            {"ratio": p.ratio, "mean_rmse": p.mean_rmse, "ci95": p.ci95, "n_runs": p.n_runs}
            for p in report.points
        ],
        "skipped": list(report.skipped),
    }
    _write_output(args.out, payload)
    _emit(
        args,
        payload,
        "\n".join(
            f"ratio {p.ratio:.2f}: rmse {p.mean_rmse:.4f} +- {p.ci95:.4f}" for p in report.points
        ),
    )
    return 0


def cmd_overlap(args) -> int:
    config = _load(args)
    names = (
        args.properties.split(",")
        if args.properties
        else sorted(p.stem for p in config.properties_dir.glob("*.csv"))
    )
    variant = parse_variant(args.variant)
    vectors = pipeline.load_variant_vectors(config, variant)
    rankings = []
    used = []
    for name in names:
        table = pipeline.load_property(config, name)
        symbols = [s for s in sorted(vectors) if table.value_of(s) is not None]
        if len(symbols) < 2:
            continue
        X = np.stack([vectors[s] for s in symbols])
        y = np.array([table.value_of(s) for s in symbols])
        standardizer = fit_standardizer(X, list(range(len(symbols))))
        model = fit_linear(standardizer.apply(X), y, fitted_on=standardizer.fitted_on)
        rankings.append(rank_features(model, property_name=name))
        used.append(name)
    matrix = overlap_matrix(rankings, args.k)
    payload = {
        "variant": args.variant,
        "k": matrix.k,
        "properties": list(matrix.property_names),
        "matrix": matrix.matrix.tolist(),
        "cluster_order": list(matrix.cluster_order),
    }
    _write_output(args.out, payload)
    _emit(args, payload, f"overlap matrix over {len(used)} properties written to {args.out}")
    return 0


def cmd_ttt(args) -> int:
    config = _load(args)
    variant = parse_variant(args.variant)
    vectors = pipeline.load_variant_vectors(config, variant)
    table = pipeline.load_property(config, args.property)
    records = pipeline.read_elements(pipeline.elements_path(config))
    order = [r.symbol for r in records]
    known = {s: v for s, v in table.known_values().items() if s in vectors}
    dim = len(next(iter(vectors.values())))
    runs = []
    for rep in range(args.seeds):
        seed = config.analysis.base_seed + rep
        split = make_split(sorted(known), args.missing_rate, seed)
        train_values = {s: known[s] for s in split.train}
        cfg = pipeline.ttt_config_for(config, dim, seed=seed)
        result = ttt_impute(vectors, train_values, cfg, order=order)
        test = sorted(split.test)
        test_rmse = (
            float(
                np.sqrt(
                    np.mean([(result.predictions[s] - known[s]) ** 2 for s in test])
                )
            )
            if test
            else None
        )
        runs.append(
            {
                "seed": seed,
                "missing_rate": split.missing_rate,
                "test_symbols": test,
                "test_rmse": test_rmse,
                "final_train_rmse": result.final_train_rmse,
                "early_stop_step": result.early_stop_step,
                "predictions": {s: result.predictions[s] for s in order},
                "loss_trace": result.loss_trace,
            }
        )
    payload = {
        "property": args.property,
        "variant": args.variant,
        "config": {
            "model_dim": config.ttt.model_dim,
            "steps": config.ttt.steps,
            "step_size": config.ttt.step_size,
            "target_standardize": config.ttt.target_standardize,
            "input_dim": dim,
        },
        "runs": runs,
    }
    _write_output(args.out, payload)
    summary = ", ".join(
        f"seed {r['seed']}: rmse {r['test_rmse']:.4f}" for r in runs if r["test_rmse"] is not None
    )
    _emit(args, {"property": args.property, "runs": len(runs)}, f"ttt {args.property}: {summary}")
    return 0


def cmd_report_vdw(args) -> int:
    config = _load(args)
    rows = pipeline.report_vdw(
        config,
        property_name=args.property,
        variant=parse_variant(args.variant),
        repeats=args.repeats or config.analysis.repeats,
    )
    payload = {"property": args.property, "rows": rows}
    _write_output(args.out, payload)
    lines = [
        f"{r['symbol']:3s} true {r['true_value']:.2f} predicted {r['predicted']:.2f} "
        f"+- {r['ci95']:.2f}"
        for r in rows
    ]
    _emit(args, payload, "\n".join(lines))
    return 0


def _write_output(out: str | None, payload: dict) -> None:
    if not out:
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="e2v", description=__doc__)
    parser.add_argument("--config", default="e2v.toml", help="project config file")
    parser.add_argument("--json", action="store_true", help="machine-readable stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load (or fetch) the corpus and segment sentences")
    p.add_argument("--corpus", default=None, help="override corpus dir (else from config)")
    p.add_argument("--fetch", action="store_true")
    p.add_argument("--url-template", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tag", help="tag every sentence with an attribute category")
    p.add_argument("--corpus", default=None)
    p.add_argument("--remote", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("summarize", help="write ratio-controlled summaries")
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--remote", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("embed", help="build embedding variants through the cache")
    p.add_argument("--variants", default="global,local,aggregated")
    p.add_argument("--ratios", default=None)
    p.add_argument("--placements", default=None)
    p.add_argument("--provider", default=None, choices=[None, "remote", "hash"])
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("run", help="run pipeline stages in order")
    p.add_argument("--stages", default=None, help="comma list from ingest,tag,summarize,embed,analyze")
    p.add_argument("--fetch", action="store_true")
    p.add_argument("--url-template", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("data", help="dataset utilities")
    data_sub = p.add_subparsers(dest="data_command", required=True)
    v = data_sub.add_parser("validate", help="validate property tables against the manifest")
    v.add_argument("--properties", default=None)
    v.set_defaults(func=cmd_data_validate)

    p = sub.add_parser("entropy", help="family-classification entropy reports")
    p.add_argument("--variant", default="global")
    p.add_argument("--property", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("tsne", help="2-D projection of one embedding variant")
    p.add_argument("--variant", default="global")
    p.add_argument("--property", default=None)
    p.add_argument("--perplexity", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tsne)

    p = sub.add_parser("budget", help="feature-budget RMSE curve")
    p.add_argument("--variant", default="global")
    p.add_argument("--property", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("sweep", help="missing-ratio sweep for one predictor")
    p.add_argument("--variant", default="global")
    p.add_argument("--property", required=True)
    p.add_argument("--predictor", default="ttt", choices=["ols", "mlp", "ttt"])
    p.add_argument("--ratios", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("overlap", help="top-k dimension overlap across properties")
    p.add_argument("--variant", default="global")
    p.add_argument("--property", default=None)
    p.add_argument("--properties", default=None, help="comma list; default: all tables")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("ttt", help="test-time-training imputation report")
    p.add_argument("--property", required=True)
    p.add_argument("--variant", default="global")
    p.add_argument("--missing-rate", type=float, default=0.2)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ttt)

    p = sub.add_parser("report-vdw", help="held-out predictions with confidence intervals")
    p.add_argument("--property", default="vdw_radius")
    p.add_argument("--variant", default="global")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report_vdw)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingPrerequisiteError as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return 3
    except RemoteServiceError as exc:
        print(f"remote service failure: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 5
    except E2vError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

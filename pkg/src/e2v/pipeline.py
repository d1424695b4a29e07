"""End-to-end pipeline stages and their artifact layout.

Stages write into the configured work directory::

    elements.jsonl            segmented records (ingest)
    annotated/<sym>.jsonl     one tagged sentence per line (tag)
    summaries/<sym>_<r>.txt   ratio-controlled summaries (summarize)
    cache/                    content-addressed embedding cache (embed)
    embeddings/               vectors plus catalog.csv (embed)
    reports/                  entropy and t-SNE outputs (analyze)
    run-manifest.json         every artifact with its digest

Each stage skips itself when its primary output already exists (unless
forced), so reruns over a warm cache do no embedding work.  Nothing here
writes timestamps: identical configs and seeds give byte-identical output.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import annotate as ann
from .analysis import classify_families, tsne
from .config import ProjectConfig
from .corpus import ElementRecord, Sentence, fetch_corpus, load_corpus, read_manifest
from .dataset import kfold, load_property_table
from .embed import (
    EmbeddingCache,
    EmbeddingStore,
    HashEmbeddingProvider,
    RemoteEmbeddingProvider,
    VariantDescriptor,
    aggregate_locals,
    embed_element,
)
from .errors import E2vError, MissingPrerequisiteError
from .remote import LlmClient
from .ttt import TttConfig, ttt_impute

STAGES = ("ingest", "tag", "summarize", "embed", "analyze")


def build_provider(config: ProjectConfig):
    if config.provider.kind == "hash":
        return HashEmbeddingProvider(dim=config.provider.dim, seed=config.provider.seed)
    return RemoteEmbeddingProvider(dim=config.provider.dim)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def elements_path(config: ProjectConfig) -> Path:
    return config.workdir / "elements.jsonl"


def write_elements(path: Path, records: list[ElementRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "symbol": record.symbol,
                        "atomic_number": record.atomic_number,
                        "name": record.name,
                        "family": record.family,
                        "page_text": record.page_text,
                        "sentences": [
                            {"index": s.index, "text": s.text, "word_count": s.word_count}
                            for s in record.sentences
                        ],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def read_elements(path: Path) -> list[ElementRecord]:
    if not path.exists():
        raise MissingPrerequisiteError(f"{path} missing; run ingest first")
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            records.append(
                ElementRecord(
                    symbol=row["symbol"],
                    atomic_number=row["atomic_number"],
                    name=row["name"],
                    family=row["family"],
                    page_text=row["page_text"],
                    sentences=tuple(
                        Sentence(index=s["index"], text=s["text"], word_count=s["word_count"])
                        for s in row["sentences"]
                    ),
                )
            )
    return records


def stage_ingest(
    config: ProjectConfig,
    force: bool = False,
    fetch: bool = False,
    url_template: str | None = None,
) -> str:
    out = elements_path(config)
    if out.exists() and not force:
        return "skipped"
    if fetch:
        if not url_template:
            raise E2vError("--fetch needs --url-template")
        entries = read_manifest(config.corpus_dir / "manifest.csv")
        pages = fetch_corpus(entries, url_template)
        for symbol, text in pages.items():
            (config.corpus_dir / f"{symbol}.txt").write_text(text, encoding="utf-8")
    records = load_corpus(config.corpus_dir)
    write_elements(out, records)
    return "ran"


def _build_tagger(config: ProjectConfig):
    if config.annotate.remote:
        return ann.RemoteTagger(LlmClient())
    return ann.KeywordTagger()


def _build_summarizer(config: ProjectConfig):
    if config.annotate.remote:
        return ann.RemoteSummarizer(LlmClient())
    return ann.ExtractiveSummarizer()


def stage_tag(config: ProjectConfig, force: bool = False, out_dir: str | None = None) -> str:
    records = read_elements(elements_path(config))
    out_dir = Path(out_dir) if out_dir else config.workdir / "annotated"
    expected = [out_dir / f"{r.symbol}.jsonl" for r in records]
    if expected and all(p.exists() for p in expected) and not force:
        return "skipped"
    tagger = _build_tagger(config)
    for record in records:
        tagged = ann.tag_sentences(record.sentences, tagger, config.annotate.concurrency)
        ann.write_annotations(out_dir, record.symbol, tagged)
    return "ran"


def stage_summarize(config: ProjectConfig, force: bool = False) -> str:
    records = read_elements(elements_path(config))
    out_dir = config.workdir / "summaries"
    expected = [
        out_dir / ann.summary_filename(r.symbol, ratio)
        for r in records
        for ratio in config.annotate.ratios
    ]
    if expected and all(p.exists() for p in expected) and not force:
        return "skipped"
    out_dir.mkdir(parents=True, exist_ok=True)
    summarizer = _build_summarizer(config)
    for record in records:
        for ratio in config.annotate.ratios:
            summary = ann.summarize(
                record.page_text, ratio, summarizer, element_symbol=record.symbol
            )
            path = out_dir / ann.summary_filename(record.symbol, ratio)
            path.write_text(summary.text + "\n", encoding="utf-8")
    return "ran"


def _local_variants(config: ProjectConfig) -> list[VariantDescriptor]:
    variants = []
    for ratio in config.annotate.ratios:
        for placement in config.annotate.placements:
            for tag in ann.TAG_ORDER:
                variants.append(
                    VariantDescriptor(
                        kind="local", attribute=tag, summary_ratio=ratio, placement=placement
                    )
                )
    return variants


def _read_summary(config: ProjectConfig, symbol: str, ratio: float) -> ann.Summary:
    path = config.workdir / "summaries" / ann.summary_filename(symbol, ratio)
    if not path.exists():
        raise MissingPrerequisiteError(f"{path} missing; run summarize first")
    text = path.read_text(encoding="utf-8").strip()
    return ann.Summary(
        element_symbol=symbol, ratio=ratio, text=text, word_count=len(text.split())
    )


def stage_embed(
    config: ProjectConfig,
    force: bool = False,
    kinds: tuple[str, ...] = ("global", "local", "aggregated"),
    provider=None,
    cache: EmbeddingCache | None = None,
) -> str:
    records = read_elements(elements_path(config))
    store = EmbeddingStore(config.workdir / "embeddings")
    if store.catalog_path.exists() and not force:
        return "skipped"
    provider = provider if provider is not None else build_provider(config)
    cache = cache if cache is not None else EmbeddingCache(config.workdir / "cache")
    want_local = "local" in kinds or "aggregated" in kinds
    for record in records:
        if "global" in kinds:
            for vec in embed_element(
                record, None, None, provider, [VariantDescriptor(kind="global")], cache
            ):
                store.save(vec)
        if not want_local:
            continue
        annotated = config.workdir / "annotated" / f"{record.symbol}.jsonl"
        if not annotated.exists():
            raise MissingPrerequisiteError(
                f"{annotated} missing; run tag first before embedding local variants"
            )
        subsets = ann.build_attribute_subsets(ann.read_annotations(annotated))
        for ratio in config.annotate.ratios:
            summary = _read_summary(config, record.symbol, ratio)
            for placement in config.annotate.placements:
                variants = [
                    VariantDescriptor(
                        kind="local", attribute=tag, summary_ratio=ratio, placement=placement
                    )
                    for tag in ann.TAG_ORDER
                ]
                locals_ = embed_element(record, subsets, summary, provider, variants, cache)
                if "local" in kinds:
                    for vec in locals_:
                        store.save(vec)
                if "aggregated" in kinds:
                    store.save(aggregate_locals(locals_))
    store.write_catalog()
    return "ran"


def _analysis_variants(config: ProjectConfig) -> list[tuple[str, VariantDescriptor]]:
    ratio = config.analysis.entropy_ratio
    return [
        ("global", VariantDescriptor(kind="global")),
        ("local-front", VariantDescriptor(kind="aggregated", summary_ratio=ratio, placement="front")),
        ("local-end", VariantDescriptor(kind="aggregated", summary_ratio=ratio, placement="end")),
    ]


def stage_analyze(config: ProjectConfig, force: bool = False) -> str:
    records = read_elements(elements_path(config))
    store = EmbeddingStore(config.workdir / "embeddings")
    if not store.catalog_path.exists():
        raise MissingPrerequisiteError("no embedding catalog; run embed first")
    reports_dir = config.workdir / "reports"
    done_marker = reports_dir / "entropy_global.json"
    if done_marker.exists() and not force:
        return "skipped"
    labels = {r.symbol: r.family for r in records}
    ordered = [r.symbol for r in records]
    k = min(config.analysis.folds, len(ordered))
    folds = kfold(ordered, k, config.analysis.base_seed)
    for label, variant in _analysis_variants(config):
        vectors = store.load_variant(variant)
        report = classify_families(vectors, labels, folds, variant_label=label)
        _write_json(
            reports_dir / f"entropy_{label}.json",
            {
                "variant": label,
                "folds": k,
                "seed": config.analysis.base_seed,
                "entropies": {s: report.entropies[s] for s in sorted(report.entropies)},
                "kde": {
                    "bandwidth": report.curve.bandwidth,
                    "grid": report.curve.grid.tolist(),
                    "density": report.curve.density.tolist(),
                },
                "skipped_folds": list(report.skipped_folds),
            },
        )
        rows = [
            {"series": "entropy", "label": s, "x": i, "y": repr(report.entropies[s])}
            for i, s in enumerate(sorted(report.entropies))
        ]
        rows += [
            {"series": "kde", "label": "", "x": repr(float(x)), "y": repr(float(y))}
            for x, y in zip(report.curve.grid, report.curve.density)
        ]
        _write_csv(reports_dir / f"entropy_{label}.csv", ["series", "label", "x", "y"], rows)

        n = len(vectors)
        if config.analysis.tsne_perplexity < (n - 1) / 3:
            symbols = [s for s in ordered if s in vectors]
            X = np.stack([vectors[s] for s in symbols])
            projection = tsne(
                X,
                perplexity=config.analysis.tsne_perplexity,
                seed=config.analysis.base_seed,
                iterations=config.analysis.tsne_iterations,
            )
            _write_json(
                reports_dir / f"tsne_{label}.json",
                {
                    "variant": label,
                    "perplexity": projection.perplexity,
                    "seed": projection.seed,
                    "iterations": projection.iterations,
                    "final_kl": float(projection.kl_trace[-1]),
                    "points": {
                        s: [float(projection.coords[i, 0]), float(projection.coords[i, 1])]
                        for i, s in enumerate(symbols)
                    },
                },
            )
            _write_csv(
                reports_dir / f"tsne_{label}.csv",
                ["symbol", "family", "x", "y"],
                [
                    {
                        "symbol": s,
                        "family": labels[s],
                        "x": repr(float(projection.coords[i, 0])),
                        "y": repr(float(projection.coords[i, 1])),
                    }
                    for i, s in enumerate(symbols)
                ],
            )
    return "ran"


def run_pipeline(
    config: ProjectConfig,
    stages: list[str],
    force: bool = False,
    fetch: bool = False,
    url_template: str | None = None,
) -> dict:
    """Run the requested stages in canonical order and write the run manifest."""
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise E2vError(f"unknown stages {unknown}; valid stages are {list(STAGES)}")
    statuses: dict[str, str] = {}
    for stage in STAGES:
        if stage not in stages:
            continue
        if stage == "ingest":
            statuses[stage] = stage_ingest(config, force, fetch, url_template)
        elif stage == "tag":
            statuses[stage] = stage_tag(config, force)
        elif stage == "summarize":
            statuses[stage] = stage_summarize(config, force)
        elif stage == "embed":
            statuses[stage] = stage_embed(config, force)
        elif stage == "analyze":
            statuses[stage] = stage_analyze(config, force)
    manifest = {"stages": statuses, "artifacts": _artifact_listing(config.workdir)}
    _write_json(config.workdir / "run-manifest.json", manifest)
    return manifest


def _artifact_listing(workdir: Path) -> list[dict]:
    artifacts = []
    for path in sorted(workdir.rglob("*")):
        if not path.is_file() or path.name == "run-manifest.json":
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        artifacts.append(
            {
                "path": str(path.relative_to(workdir)),
                "sha256": digest,
                "bytes": path.stat().st_size,
            }
        )
    return artifacts


def verify_manifest(workdir: Path) -> list[str]:
    """Re-digest artifacts against the run manifest; returns mismatched paths."""
    manifest = json.loads((workdir / "run-manifest.json").read_text(encoding="utf-8"))
    bad = []
    for item in manifest["artifacts"]:
        path = workdir / item["path"]
        if not path.exists():
            bad.append(item["path"])
            continue
        if hashlib.sha256(path.read_bytes()).hexdigest() != item["sha256"]:
            bad.append(item["path"])
    return bad


def load_variant_vectors(config: ProjectConfig, variant: VariantDescriptor) -> dict[str, np.ndarray]:
    store = EmbeddingStore(config.workdir / "embeddings")
    if not store.catalog_path.exists():
        raise MissingPrerequisiteError("no embedding catalog; run embed first")
    return store.load_variant(variant)


def load_property(config: ProjectConfig, name: str):
    path = config.properties_dir / f"{name}.csv"
    if not path.exists():
        raise E2vError(f"no property table {name!r} in {config.properties_dir}")
    manifest = read_manifest(config.corpus_dir / "manifest.csv")
    return load_property_table(path, [e.symbol for e in manifest], name=name)


def ttt_config_for(config: ProjectConfig, input_dim: int, seed: int) -> TttConfig:
    return TttConfig(
        input_dim=input_dim,
        model_dim=config.ttt.model_dim,
        steps=config.ttt.steps,
        step_size=config.ttt.step_size,
        seed=seed,
        target_standardize=config.ttt.target_standardize,
    )


def report_vdw(
    config: ProjectConfig,
    property_name: str = "vdw_radius",
    variant: VariantDescriptor | None = None,
    repeats: int | None = None,
) -> list[dict]:
    """Per-element held-out predictions with a 95% confidence half-width.

    Every element with a ground-truth value is withheld in turn; the
    imputer runs ``repeats`` times with distinct seeds, and the spread of
    those runs gives the confidence interval.
    """
    variant = variant if variant is not None else VariantDescriptor(kind="global")
    repeats = repeats if repeats is not None else config.analysis.repeats
    if repeats < 2:
        raise E2vError("report needs at least 2 repeats for a confidence interval")
    table = load_property(config, property_name)
    vectors = load_variant_vectors(config, variant)
    records = read_elements(elements_path(config))
    order = [r.symbol for r in records]
    known = {s: v for s, v in table.known_values().items() if s in vectors}
    skipped = [s for s in order if table.value_of(s) is None]
    rows = []
    dim = len(next(iter(vectors.values())))
    for symbol in order:
        true_value = table.value_of(symbol)
        if true_value is None:
            continue
        held_out = {s: v for s, v in known.items() if s != symbol}
        predictions = []
        for rep in range(repeats):
            cfg = ttt_config_for(config, dim, seed=config.analysis.base_seed + rep)
            result = ttt_impute(vectors, held_out, cfg, order=order)
            predictions.append(result.predictions[symbol])
        arr = np.asarray(predictions)
        rows.append(
            {
                "symbol": symbol,
                "true_value": float(true_value),
                "predicted": float(arr.mean()),
                "ci95": float(1.96 * arr.std(ddof=1) / np.sqrt(repeats)),
            }
        )
    if skipped:
        import warnings

        warnings.warn(f"elements without ground truth excluded: {skipped}", stacklevel=2)
    return rows

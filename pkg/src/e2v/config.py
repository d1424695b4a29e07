"""Project configuration loaded from a TOML document at the project root.

Secrets (service tokens and endpoints) never live here; they come from
environment variables read by the remote clients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class AnnotateSettings:
    remote: bool = False
    ratios: tuple[float, ...] = (0.05, 0.1, 0.2)
    placements: tuple[str, ...] = ("front", "end")
    concurrency: int = 4


@dataclass(frozen=True)
class ProviderSettings:
    kind: str = "hash"
    dim: int = 768
    seed: int = 0


@dataclass(frozen=True)
class TttSettings:
    model_dim: int = 64
    steps: int = 2000
    step_size: float = 1e-3
    target_standardize: bool = True


@dataclass(frozen=True)
class AnalysisSettings:
    budget_start: int = 100
    budget_stop: int = 768
    budget_step: int = 10
    folds: int = 10
    missing_ratios: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    repeats: int = 5
    base_seed: int = 0
    tsne_perplexity: float = 10.0
    tsne_iterations: int = 1000
    saturation_tau: float = 0.02
    entropy_ratio: float = 0.05

    def budgets(self, dim: int) -> list[int]:
        stop = min(self.budget_stop, dim)
        grid = list(range(self.budget_start, stop + 1, self.budget_step))
        if not grid:
            grid = [min(self.budget_start, dim)]
        if grid[-1] != stop:
            grid.append(stop)
        return grid


@dataclass(frozen=True)
class ProjectConfig:
    root: Path
    corpus_dir: Path
    properties_dir: Path
    workdir: Path
    annotate: AnnotateSettings = field(default_factory=AnnotateSettings)
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    ttt: TttSettings = field(default_factory=TttSettings)


def _tuple_of(values, cast) -> tuple:
    return tuple(cast(v) for v in values)


def load_config(path: str | Path) -> ProjectConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    root = path.parent.resolve()

    def resolve(key: str, default: str) -> Path:
        return (root / raw.get(key, default)).resolve()

    corpus_dir = resolve("corpus_dir", "data/corpus")
    properties_dir = resolve("properties_dir", "data/properties")
    workdir = resolve("workdir", "out")
    if not corpus_dir.is_dir():
        raise ConfigError(f"corpus_dir does not exist: {corpus_dir}")
    if not properties_dir.is_dir():
        raise ConfigError(f"properties_dir does not exist: {properties_dir}")

    ann = raw.get("annotate", {})
    annotate = AnnotateSettings(
        remote=bool(ann.get("remote", False)),
        ratios=_tuple_of(ann.get("ratios", (0.05, 0.1, 0.2)), float),
        placements=_tuple_of(ann.get("placements", ("front", "end")), str),
        concurrency=int(ann.get("concurrency", 4)),
    )
    for ratio in annotate.ratios:
        if not 0 < ratio < 1:
            raise ConfigError(f"summary ratio must be in (0, 1): {ratio}")
    for placement in annotate.placements:
        if placement not in ("front", "end"):
            raise ConfigError(f"placement must be front or end: {placement!r}")

    prov = raw.get("provider", {})
    provider = ProviderSettings(
        kind=str(prov.get("kind", "hash")),
        dim=int(prov.get("dim", 768)),
        seed=int(prov.get("seed", 0)),
    )
    if provider.kind not in ("hash", "remote"):
        raise ConfigError(f"provider kind must be hash or remote: {provider.kind!r}")
    if provider.dim < 2:
        raise ConfigError(f"provider dim must be >= 2: {provider.dim}")

    ana = raw.get("analysis", {})
    analysis = AnalysisSettings(
        budget_start=int(ana.get("budget_start", 100)),
        budget_stop=int(ana.get("budget_stop", 768)),
        budget_step=int(ana.get("budget_step", 10)),
        folds=int(ana.get("folds", 10)),
        missing_ratios=_tuple_of(ana.get("missing_ratios", (0.2, 0.4, 0.6, 0.8)), float),
        repeats=int(ana.get("repeats", 5)),
        base_seed=int(ana.get("base_seed", 0)),
        tsne_perplexity=float(ana.get("tsne_perplexity", 10.0)),
        tsne_iterations=int(ana.get("tsne_iterations", 1000)),
        saturation_tau=float(ana.get("saturation_tau", 0.02)),
        entropy_ratio=float(ana.get("entropy_ratio", 0.05)),
    )
    if analysis.entropy_ratio not in annotate.ratios:
        raise ConfigError(
            f"entropy_ratio {analysis.entropy_ratio} is not among annotate ratios {annotate.ratios}"
        )

    ttt_raw = raw.get("ttt", {})
    ttt = TttSettings(
        model_dim=int(ttt_raw.get("model_dim", 64)),
        steps=int(ttt_raw.get("steps", 2000)),
        step_size=float(ttt_raw.get("step_size", 1e-3)),
        target_standardize=bool(ttt_raw.get("target_standardize", True)),
    )
    return ProjectConfig(
        root=root,
        corpus_dir=corpus_dir,
        properties_dir=properties_dir,
        workdir=workdir,
        annotate=annotate,
        provider=provider,
        analysis=analysis,
        ttt=ttt,
    )

"""Fixed-size vectors for composed element texts.

A provider turns text into a vector: either the remote embedding service
or a seeded feature-hashing embedder that needs no network.  Results go
through a content-addressed cache so identical text is never embedded
twice, and reruns are bit-exact.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse

import numpy as np

from .annotate import AttributeTag, Summary, TAG_ORDER, compose_local_input, format_ratio
from .corpus import ElementRecord
from .errors import E2vError, NumericalError, RemoteServiceError
from .remote import EmbeddingClient

_TOKEN_RE = re.compile(r"[0-9a-z]+")


@dataclass(frozen=True)
class VariantDescriptor:
    kind: str  # "global" | "local" | "aggregated"
    attribute: AttributeTag | None = None
    summary_ratio: float | None = None
    placement: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("global", "local", "aggregated"):
            raise E2vError(f"unknown variant kind {self.kind!r}")
        if self.kind == "local":
            if self.attribute is None or self.summary_ratio is None or self.placement is None:
                raise E2vError("local variants need attribute, summary_ratio, and placement")
        if self.kind == "global" and (
            self.attribute or self.summary_ratio is not None or self.placement
        ):
            raise E2vError("global variants take no attribute/ratio/placement")
        if self.kind == "aggregated" and self.attribute is not None:
            raise E2vError("aggregated variants have no single attribute")
        if self.placement is not None and self.placement not in ("front", "end"):
            raise E2vError(f"placement must be 'front' or 'end', got {self.placement!r}")

    @property
    def name(self) -> str:
        if self.kind == "global":
            return "global"
        ratio = format_ratio(self.summary_ratio) if self.summary_ratio is not None else ""
        if self.kind == "local":
            return f"local_{self.attribute.value}_r{ratio}_{self.placement}"
        if ratio:
            return f"aggregated_r{ratio}_{self.placement}"
        return "aggregated"


GLOBAL_VARIANT = VariantDescriptor(kind="global")


@dataclass(frozen=True)
class EmbeddingVector:
    element_symbol: str
    variant: VariantDescriptor
    dim: int
    values: np.ndarray  # float32, length dim
    empty_subset: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float32)
        if values.shape != (self.dim,):
            raise E2vError(f"expected {self.dim} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"non-finite embedding for {self.element_symbol}")
        object.__setattr__(self, "values", values)


def _hash64(seed: int, feature: str) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Seeded feature-hashing embedder.

    Lowercased alphanumeric tokens and their adjacent-token bigrams each
    hash to a bucket (hash mod dim) with a sign from the hash's bit parity,
    contributing +-1/sqrt(feature count); the accumulated vector is then
    L2-normalized.  All-zero accumulation yields the first basis vector.
    """
    if dim < 2:
        raise E2vError(f"hash embedding dim must be >= 2, got {dim}")
    tokens = _TOKEN_RE.findall(text.lower())
    features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    vec = np.zeros(dim, dtype=np.float64)
    if features:
        weight = 1.0 / math.sqrt(len(features))
        for feature in features:
            h = _hash64(seed, feature)
            sign = 1.0 if h.bit_count() % 2 == 0 else -1.0
            vec[h % dim] += sign * weight
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


class HashEmbeddingProvider:
    """Deterministic offline stand-in for the embedding service."""

    def __init__(self, dim: int = 768, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.calls = 0

    @property
    def provider_id(self) -> str:
        return f"hash-v1-d{self.dim}-s{self.seed}"

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        return hash_embed(text, self.dim, self.seed)


class RemoteEmbeddingProvider:
    def __init__(self, dim: int = 768, client: EmbeddingClient | None = None):
        self.dim = dim
        self.client = client if client is not None else EmbeddingClient()
        self.calls = 0

    @property
    def provider_id(self) -> str:
        host = urlparse(self.client.url).netloc or "unknown"
        return f"remote-{host}-d{self.dim}"

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        values = np.asarray(self.client.embed(text), dtype=np.float64)
        if values.shape != (self.dim,):
            raise RemoteServiceError(
                f"embedding service returned {values.shape[0] if values.ndim == 1 else values.shape} "
                f"values, expected {self.dim}"
            )
        return values


def write_vec(path: str | Path, values: np.ndarray) -> None:
    """Binary vector file: little-endian u32 dim, then dim float32 values."""
    values = np.asarray(values, dtype="<f4")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<I", values.shape[0]))
        fh.write(values.tobytes())
    os.replace(tmp, path)


def read_vec(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    (dim,) = struct.unpack_from("<I", data, 0)
    values = np.frombuffer(data, dtype="<f4", offset=4)
    if values.shape[0] != dim:
        raise E2vError(f"{path}: header says {dim} values, file holds {values.shape[0]}")
    return values.copy()


class EmbeddingCache:
    """Append-only content-addressed vector cache.

    Keys are SHA-256 digests of (provider id, dim, text); vector files are
    written via temp-then-rename so concurrent readers never see partial
    data.
    """

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(provider_id: str, dim: int, text: str) -> str:
        payload = f"{provider_id}\x1f{dim}\x1f{text}".encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def _vec_path(self, digest: str) -> Path:
        return self.cache_dir / f"{digest}.vec"

    def get(self, digest: str) -> np.ndarray | None:
        path = self._vec_path(digest)
        if not path.exists():
            self.misses += 1
            return None
        self.hits += 1
        return read_vec(path)

    def put(self, digest: str, values: np.ndarray, provider_id: str, dim: int) -> None:
        path = self._vec_path(digest)
        if path.exists():
            return
        write_vec(path, values)
        with open(self.cache_dir / "index.csv", "a", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerow([digest, provider_id, dim])


def embed_text(text: str, provider, cache: EmbeddingCache | None = None) -> np.ndarray:
    """Embed one text through the cache; identical text never re-embeds."""
    if text == "":
        raise E2vError("cannot embed empty text")
    if cache is not None:
        digest = EmbeddingCache.key(provider.provider_id, provider.dim, text)
        cached = cache.get(digest)
        if cached is not None:
            return cached
    try:
        values = np.asarray(provider.embed(text), dtype=np.float64)
    except RemoteServiceError as exc:
        digest = EmbeddingCache.key(provider.provider_id, provider.dim, text)
        raise RemoteServiceError(
            f"embedding failed for digest {digest[:16]}...: {exc}",
            status=exc.status,
            retriable=exc.retriable,
        ) from exc
    if not np.all(np.isfinite(values)):
        raise NumericalError("provider returned non-finite embedding values")
    if cache is not None:
        cache.put(digest, values, provider.provider_id, provider.dim)
        return read_vec(cache._vec_path(digest))
    return values.astype(np.float32).astype(np.float64)


def embed_element(
    record: ElementRecord,
    subsets: dict[AttributeTag, str] | None,
    summary: Summary | None,
    provider,
    variants: list[VariantDescriptor],
    cache: EmbeddingCache | None = None,
) -> list[EmbeddingVector]:
    """Build the requested embedding variants for one element."""
    out: list[EmbeddingVector] = []
    for variant in variants:
        if variant.kind == "global":
            values = embed_text(record.page_text, provider, cache)
            out.append(
                EmbeddingVector(
                    element_symbol=record.symbol, variant=variant, dim=provider.dim, values=values
                )
            )
        elif variant.kind == "local":
            if subsets is None or summary is None:
                raise E2vError("local variants need attribute subsets and a summary")
            attribute_text = subsets.get(variant.attribute, "")
            composed = compose_local_input(attribute_text, summary, variant.placement)
            values = embed_text(composed, provider, cache)
            out.append(
                EmbeddingVector(
                    element_symbol=record.symbol,
                    variant=variant,
                    dim=provider.dim,
                    values=values,
                    empty_subset=(attribute_text == ""),
                )
            )
        else:
            raise E2vError("aggregated variants come from aggregate_locals, not embed_element")
    return out


def aggregate_locals(locals_: list[EmbeddingVector]) -> EmbeddingVector:
    """Concatenate the eight local vectors of one element in fixed tag order."""
    if len(locals_) != 8:
        raise E2vError(f"aggregation needs exactly 8 local vectors, got {len(locals_)}")
    by_tag: dict[AttributeTag, EmbeddingVector] = {}
    for vec in locals_:
        if vec.variant.kind != "local":
            raise E2vError(f"cannot aggregate a {vec.variant.kind} vector")
        if vec.variant.attribute in by_tag:
            raise E2vError(f"duplicate local vector for tag {vec.variant.attribute.value}")
        by_tag[vec.variant.attribute] = vec
    if set(by_tag) != set(TAG_ORDER):
        missing = [t.value for t in TAG_ORDER if t not in by_tag]
        raise E2vError(f"missing local vectors for tags {missing}")
    dims = {vec.dim for vec in locals_}
    if len(dims) != 1:
        raise E2vError(f"local vectors disagree on dim: {sorted(dims)}")
    symbols = {vec.element_symbol for vec in locals_}
    if len(symbols) != 1:
        raise E2vError(f"local vectors belong to different elements: {sorted(symbols)}")
    first = by_tag[TAG_ORDER[0]]
    dim = first.dim
    stacked = np.concatenate([by_tag[tag].values for tag in TAG_ORDER])
    variant = VariantDescriptor(
        kind="aggregated",
        summary_ratio=first.variant.summary_ratio,
        placement=first.variant.placement,
    )
    return EmbeddingVector(
        element_symbol=first.element_symbol,
        variant=variant,
        dim=8 * dim,
        values=stacked,
        empty_subset=any(vec.empty_subset for vec in locals_),
    )


@dataclass
class EmbeddingStore:
    """On-disk layout: ``embeddings/<symbol>/<variant>.vec`` plus a catalog."""

    root: Path
    _rows: list[dict] = field(default_factory=list)

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._rows = []

    @property
    def catalog_path(self) -> Path:
        return self.root / "catalog.csv"

    def save(self, vec: EmbeddingVector) -> Path:
        element_dir = self.root / vec.element_symbol
        element_dir.mkdir(parents=True, exist_ok=True)
        path = element_dir / f"{vec.variant.name}.vec"
        write_vec(path, vec.values)
        self._rows.append(
            {
                "symbol": vec.element_symbol,
                "kind": vec.variant.kind,
                "attribute": vec.variant.attribute.value if vec.variant.attribute else "",
                "ratio": format_ratio(vec.variant.summary_ratio)
                if vec.variant.summary_ratio is not None
                else "",
                "placement": vec.variant.placement or "",
                "dim": vec.dim,
                "empty_subset": "true" if vec.empty_subset else "false",
                "path": str(path.relative_to(self.root)),
            }
        )
        return path

    def write_catalog(self) -> Path:
        fields = ["symbol", "kind", "attribute", "ratio", "placement", "dim", "empty_subset", "path"]
        with open(self.catalog_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self._rows:
                writer.writerow(row)
        return self.catalog_path

    def read_catalog(self) -> list[dict]:
        if not self.catalog_path.exists():
            raise E2vError(f"no embedding catalog at {self.catalog_path}")
        with open(self.catalog_path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))

    def load_variant(self, variant: VariantDescriptor) -> dict[str, np.ndarray]:
        """All stored vectors of one variant, keyed by element symbol."""
        wanted = variant.name
        out: dict[str, np.ndarray] = {}
        for row in self.read_catalog():
            path = self.root / row["path"]
            if Path(row["path"]).name == f"{wanted}.vec":
                out[row["symbol"]] = read_vec(path).astype(np.float64)
        if not out:
            raise E2vError(f"no stored embeddings for variant {wanted!r}")
        return out

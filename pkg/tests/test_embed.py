import hashlib
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2v.annotate import AttributeTag, KeywordTagger, Summary, build_attribute_subsets, tag_sentences
from e2v.corpus import ElementRecord, segment_sentences
from e2v.embed import (
    EmbeddingCache,
    EmbeddingStore,
    EmbeddingVector,
    HashEmbeddingProvider,
    VariantDescriptor,
    aggregate_locals,
    embed_element,
    embed_text,
    hash_embed,
    read_vec,
    write_vec,
)
from e2v.errors import E2vError


def reference_hash_embed(text, dim, seed):
    """Independent reimplementation of the hashing scheme (the oracle)."""
    tokens = []
    word = []
    for ch in text.lower():
        if ch.isascii() and (ch.isalpha() or ch.isdigit()):
            word.append(ch)
        elif word:
            tokens.append("".join(word))
            word = []
    if word:
        tokens.append("".join(word))
    features = list(tokens)
    for i in range(len(tokens) - 1):
        features.append(tokens[i] + " " + tokens[i + 1])
    vec = [0.0] * dim
    for feature in features:
        key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
        digest = hashlib.blake2b(feature.encode(), digest_size=8, key=key).digest()
        h = int.from_bytes(digest, "little")
        sign = 1.0 if bin(h).count("1") % 2 == 0 else -1.0
        vec[h % dim] += sign / math.sqrt(len(features))
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return [v / norm for v in vec]


def test_hash_embed_matches_reference():
    got = hash_embed("helium gas", dim=16, seed=7)
    want = reference_hash_embed("helium gas", dim=16, seed=7)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_hash_embed_unit_norm_and_deterministic():
    a = hash_embed("colorless odorless noble gas", dim=32, seed=3)
    b = hash_embed("colorless odorless noble gas", dim=32, seed=3)
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-6


def test_hash_embed_no_tokens_returns_basis_vector():
    vec = hash_embed("!!! ...", dim=8, seed=0)
    assert vec[0] == 1.0
    assert np.all(vec[1:] == 0.0)


def test_hash_embed_seeds_decorrelate():
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(200)]
    cosines = []
    for _ in range(1000):
        pair = rng.choice(words, size=2, replace=False)
        text = " ".join(pair)
        a = hash_embed(text, dim=64, seed=1)
        b = hash_embed(text, dim=64, seed=2)
        cosines.append(abs(float(a @ b)))
    assert np.mean(cosines) < 0.1


def test_hash_embed_dim_too_small():
    with pytest.raises(E2vError):
        hash_embed("text", dim=1)


@settings(max_examples=100)
@given(st.text(min_size=1), st.integers(min_value=2, max_value=64), st.integers())
def test_hash_embed_norm_property(text, dim, seed):
    vec = hash_embed(text, dim, seed)
    assert abs(np.linalg.norm(vec) - 1.0) < 1e-6


def test_vec_file_roundtrip(tmp_path):
    values = np.array([1.5, -2.25, 0.0, 3.0], dtype=np.float32)
    path = tmp_path / "x.vec"
    write_vec(path, values)
    raw = path.read_bytes()
    assert struct.unpack_from("<I", raw, 0)[0] == 4
    assert np.array_equal(read_vec(path), values)


def test_cache_hit_is_bit_identical(tmp_path):
    provider = HashEmbeddingProvider(dim=16, seed=1)
    cache = EmbeddingCache(tmp_path)
    first = embed_text("helium balloon lift", provider, cache)
    second = embed_text("helium balloon lift", provider, cache)
    assert np.array_equal(first, second)
    assert provider.calls == 1
    assert cache.hits == 1 and cache.misses == 1
    assert (tmp_path / "index.csv").exists()


def test_cache_key_separates_providers(tmp_path):
    a = EmbeddingCache.key("hash-v1-d16-s1", 16, "text")
    b = EmbeddingCache.key("hash-v1-d16-s2", 16, "text")
    c = EmbeddingCache.key("hash-v1-d16-s1", 32, "text")
    assert len({a, b, c}) == 3


def test_embed_text_empty_is_error():
    with pytest.raises(E2vError):
        embed_text("", HashEmbeddingProvider(dim=8))


def _record():
    text = "Gold is dense. It melts at 1337 kelvin. Ores are mined in veins."
    return ElementRecord(
        symbol="Au",
        atomic_number=79,
        name="Gold",
        family="transition metal",
        page_text=text,
        sentences=segment_sentences(text),
    )


def _subsets_and_summary(record):
    tagged = tag_sentences(record.sentences, KeywordTagger())
    subsets = build_attribute_subsets(tagged)
    summary = Summary("Au", 0.2, "Gold is dense.", 3)
    return subsets, summary


def test_embed_element_global_only():
    record = _record()
    vectors = embed_element(record, None, None, HashEmbeddingProvider(dim=16), [VariantDescriptor(kind="global")])
    assert len(vectors) == 1
    assert vectors[0].variant.kind == "global"
    assert vectors[0].dim == 16


def test_embed_element_local_yields_eight():
    record = _record()
    subsets, summary = _subsets_and_summary(record)
    variants = [
        VariantDescriptor(kind="local", attribute=tag, summary_ratio=0.05, placement="front")
        for tag in AttributeTag
    ]
    vectors = embed_element(record, subsets, summary, HashEmbeddingProvider(dim=16), variants)
    assert len(vectors) == 8
    assert {v.variant.attribute for v in vectors} == set(AttributeTag)
    assert any(v.empty_subset for v in vectors)  # most tags have no sentences here


def test_embed_element_both_kinds_additive():
    record = _record()
    subsets, summary = _subsets_and_summary(record)
    variants = [VariantDescriptor(kind="global")] + [
        VariantDescriptor(kind="local", attribute=tag, summary_ratio=0.05, placement="end")
        for tag in AttributeTag
    ]
    vectors = embed_element(record, subsets, summary, HashEmbeddingProvider(dim=16), variants)
    assert len(vectors) == 9


def _local_vectors(dim=8, symbol="Au"):
    rng = np.random.default_rng(0)
    out = []
    for tag in AttributeTag:
        out.append(
            EmbeddingVector(
                element_symbol=symbol,
                variant=VariantDescriptor(
                    kind="local", attribute=tag, summary_ratio=0.05, placement="front"
                ),
                dim=dim,
                values=rng.normal(size=dim).astype(np.float32),
            )
        )
    return out


def test_aggregate_locals_concatenates_in_tag_order():
    locals_ = _local_vectors(dim=768 // 8)  # keep the test quick but realistic in shape
    agg = aggregate_locals(locals_)
    assert agg.dim == 8 * (768 // 8)
    np.testing.assert_array_equal(agg.values[: 768 // 8], locals_[0].values)


def test_aggregate_locals_dim_768_gives_6144():
    rng = np.random.default_rng(1)
    locals_ = [
        EmbeddingVector(
            element_symbol="Au",
            variant=VariantDescriptor(kind="local", attribute=tag, summary_ratio=0.05, placement="front"),
            dim=768,
            values=rng.normal(size=768).astype(np.float32),
        )
        for tag in AttributeTag
    ]
    assert aggregate_locals(locals_).dim == 6144


def test_aggregate_order_independent_of_input_order():
    locals_ = _local_vectors()
    agg1 = aggregate_locals(locals_)
    agg2 = aggregate_locals(list(reversed(locals_)))
    np.testing.assert_array_equal(agg1.values, agg2.values)


def test_aggregate_same_unit_vector_squared_norm_eight():
    unit = np.zeros(8, dtype=np.float32)
    unit[0] = 1.0
    locals_ = [
        EmbeddingVector(
            element_symbol="Au",
            variant=VariantDescriptor(kind="local", attribute=tag, summary_ratio=0.05, placement="front"),
            dim=8,
            values=unit,
        )
        for tag in AttributeTag
    ]
    agg = aggregate_locals(locals_)
    assert abs(float(np.sum(agg.values**2)) - 8.0) < 1e-6


def test_aggregate_locals_requires_exactly_eight():
    with pytest.raises(E2vError):
        aggregate_locals(_local_vectors()[:7])


def test_aggregate_locals_rejects_duplicate_tag():
    locals_ = _local_vectors()
    locals_[1] = EmbeddingVector(
        element_symbol="Au",
        variant=VariantDescriptor(kind="local", attribute=AttributeTag.MECH, summary_ratio=0.05, placement="front"),
        dim=8,
        values=np.zeros(8, dtype=np.float32),
    )
    with pytest.raises(E2vError, match="duplicate|missing"):
        aggregate_locals(locals_)


def test_variant_descriptor_validation():
    with pytest.raises(E2vError):
        VariantDescriptor(kind="local", attribute=AttributeTag.MECH)
    with pytest.raises(E2vError):
        VariantDescriptor(kind="global", summary_ratio=0.05)
    with pytest.raises(E2vError):
        VariantDescriptor(kind="weird")
    name = VariantDescriptor(
        kind="local", attribute=AttributeTag.ARF, summary_ratio=0.05, placement="front"
    ).name
    assert name == "local_ARF_r0.05_front"


def test_store_catalog_roundtrip(tmp_path):
    store = EmbeddingStore(tmp_path)
    locals_ = _local_vectors()
    for vec in locals_:
        store.save(vec)
    store.save(aggregate_locals(locals_))
    store.write_catalog()
    rows = store.read_catalog()
    assert len(rows) == 9
    agg_variant = VariantDescriptor(kind="aggregated", summary_ratio=0.05, placement="front")
    loaded = store.load_variant(agg_variant)
    assert set(loaded) == {"Au"}
    assert loaded["Au"].shape == (64,)


def test_variant_completeness_counts():
    # all local settings => 8 tags x |ratios| x |placements| vectors
    record = _record()
    subsets, summary5 = _subsets_and_summary(record)
    provider = HashEmbeddingProvider(dim=8)
    count = 0
    for ratio in (0.05, 0.1):
        summary = Summary("Au", ratio, "Gold is dense.", 3)
        for placement in ("front", "end"):
            variants = [
                VariantDescriptor(kind="local", attribute=tag, summary_ratio=ratio, placement=placement)
                for tag in AttributeTag
            ]
            count += len(embed_element(record, subsets, summary, provider, variants))
    assert count == 8 * 2 * 2

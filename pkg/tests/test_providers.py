"""Mock embeddings, vector-file IO, precomputed lookup, caching wrapper."""

import numpy as np
import pytest

from embench.providers import (
    CachingProvider,
    MockProvider,
    PrecomputedProvider,
    ProviderConfig,
    ProviderError,
    build_provider,
    load_precomputed,
    load_provider_config,
    mock_embed,
    write_vectors,
)


# ---------------------------------------------------------------- mock


def test_mock_embed_deterministic():
    a = mock_embed("some text", 64, seed=0)
    b = mock_embed("some text", 64, seed=0)
    np.testing.assert_array_equal(a, b)
    assert a.dtype == np.float32


def test_mock_embed_unit_norm():
    v = mock_embed("anything", 256, seed=1)
    assert abs(float(np.linalg.norm(v)) - 1.0) < 1e-6


def test_mock_embed_text_sensitivity():
    a = mock_embed("text one", 64)
    b = mock_embed("text two", 64)
    assert not np.allclose(a, b)


def test_mock_embed_seed_sensitivity():
    a = mock_embed("same text", 64, seed=0)
    b = mock_embed("same text", 64, seed=1)
    assert not np.allclose(a, b)


def test_mock_provider_batch_matches_single():
    p = MockProvider(dim=32, seed=5)
    texts = [f"item {i}" for i in range(20)]
    batch = p.embed_batch(texts)
    assert batch.shape == (20, 32)
    for i, t in enumerate(texts):
        np.testing.assert_array_equal(batch[i], mock_embed(t, 32, seed=5))


def test_mock_provider_repeats_share_vectors():
    p = MockProvider(dim=16, seed=0)
    batch = p.embed_batch(["dup", "other", "dup"])
    np.testing.assert_array_equal(batch[0], batch[2])


def test_mock_vectors_near_orthogonal_in_high_dim():
    # Pairwise cosines of independent random unit vectors concentrate near 0;
    # this is what makes the mock provider behave like a random scorer.
    p = MockProvider(dim=256, seed=0)
    vecs = p.embed_batch([f"text number {i}" for i in range(200)])
    sims = vecs @ vecs.T
    off_diag = sims[~np.eye(200, dtype=bool)]
    assert float(np.abs(off_diag).mean()) < 0.08
    assert float(np.abs(off_diag).max()) < 0.35


def test_mock_seeds_decorrelated():
    a = MockProvider(dim=256, seed=0).embed_batch([f"t{i}" for i in range(50)])
    b = MockProvider(dim=256, seed=1).embed_batch([f"t{i}" for i in range(50)])
    cos = np.abs((a * b).sum(axis=1))
    assert float(cos.mean()) < 0.1


# ---------------------------------------------------------------- vector files


def test_vector_file_round_trip_bitwise(tmp_path):
    path = tmp_path / "v.bin"
    rng = np.random.default_rng(0)
    keys = [f"key {i}" for i in range(10)]
    vectors = rng.standard_normal((10, 8)).astype(np.float32)
    write_vectors(path, keys, vectors)
    store = load_precomputed(path)
    assert store.dim == 8
    for i, k in enumerate(keys):
        np.testing.assert_array_equal(store.vectors[k], vectors[i])


def test_vector_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "v.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(ProviderError, match="magic"):
        load_precomputed(path)


def test_vector_file_rejects_truncation(tmp_path):
    path = tmp_path / "v.bin"
    keys = ["a", "b"]
    vectors = np.ones((2, 4), dtype=np.float32)
    write_vectors(path, keys, vectors)
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(ProviderError):
        load_precomputed(path)


def test_vector_file_rejects_trailing_garbage(tmp_path):
    path = tmp_path / "v.bin"
    write_vectors(path, ["a"], np.ones((1, 4), dtype=np.float32))
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(ProviderError):
        load_precomputed(path)


def test_vector_file_rejects_nan(tmp_path):
    path = tmp_path / "v.bin"
    vectors = np.ones((2, 4), dtype=np.float32)
    vectors[1, 2] = np.nan
    write_vectors(path, ["a", "b"], vectors)
    with pytest.raises(ProviderError, match="b"):
        load_precomputed(path)


def test_write_vectors_rejects_duplicate_key(tmp_path):
    with pytest.raises(ValueError, match="duplicate"):
        write_vectors(tmp_path / "v.bin", ["same", "same"], np.ones((2, 4), dtype=np.float32))


def test_vector_file_rejects_duplicate_key_on_load(tmp_path):
    # Hand-build a file with a repeated key; the writer refuses to make one.
    import struct

    path = tmp_path / "v.bin"
    row = np.ones(4, dtype=np.float32).tobytes()
    entry = struct.pack("<I", 4) + b"same" + row
    path.write_bytes(b"EMBV" + struct.pack("<III", 1, 4, 2) + entry + entry)
    with pytest.raises(ProviderError, match="same"):
        load_precomputed(path)


def test_write_vectors_validates_shape(tmp_path):
    with pytest.raises(ValueError):
        write_vectors(tmp_path / "v.bin", ["a"], np.ones((2, 4), dtype=np.float32))


# ---------------------------------------------------------------- precomputed


def test_precomputed_provider_lookup(tmp_path):
    path = tmp_path / "v.bin"
    vectors = np.array([[3.0, 4.0], [1.0, 0.0]], dtype=np.float32)
    write_vectors(path, ["long", "unit"], vectors)
    p = PrecomputedProvider(load_precomputed(path))
    out = p.embed_batch(["unit", "long"])
    np.testing.assert_allclose(out[1], [0.6, 0.8], atol=1e-6)  # normalized on read


def test_precomputed_provider_missing_key(tmp_path):
    path = tmp_path / "v.bin"
    write_vectors(path, ["present"], np.ones((1, 4), dtype=np.float32))
    p = PrecomputedProvider(load_precomputed(path))
    with pytest.raises(ProviderError, match="absent"):
        p.embed_batch(["absent"])


def test_precomputed_provider_raw_mode(tmp_path):
    path = tmp_path / "v.bin"
    vectors = np.array([[3.0, 4.0]], dtype=np.float32)
    write_vectors(path, ["k"], vectors)
    p = PrecomputedProvider(load_precomputed(path), normalize=False)
    np.testing.assert_array_equal(p.embed_batch(["k"])[0], [3.0, 4.0])


# ---------------------------------------------------------------- caching


def test_caching_provider_transparent_and_counts():
    inner = MockProvider(dim=16, seed=0)
    cached = CachingProvider(inner)
    texts = ["a", "b", "c"]
    first = cached.embed_batch(texts)
    np.testing.assert_array_equal(first, inner.embed_batch(texts))
    assert cached.inner_calls == 1 and cached.inner_texts == 3
    again = cached.embed_batch(["b", "a", "d"])
    np.testing.assert_array_equal(again[0], first[1])
    assert cached.inner_calls == 2 and cached.inner_texts == 4  # only "d" was new


def test_caching_provider_dim_passthrough():
    cached = CachingProvider(MockProvider(dim=24, seed=0))
    assert cached.dim == 24


# ---------------------------------------------------------------- config


def test_load_provider_config(tmp_path):
    path = tmp_path / "p.json"
    path.write_text('{"kind": "Mock", "dim": 12, "seed": 9}')
    cfg = load_provider_config(path)
    assert cfg.kind == "mock" and cfg.dim == 12 and cfg.seed == 9


def test_provider_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "p.json"
    path.write_text('{"kind": "mock", "dim": 12, "wat": 1}')
    with pytest.raises(ValueError, match="wat"):
        load_provider_config(path)


def test_provider_config_validation():
    with pytest.raises(ValueError):
        ProviderConfig(kind="mock", dim=0)
    with pytest.raises(ValueError):
        ProviderConfig(kind="teapot", dim=4)
    with pytest.raises(ValueError):
        ProviderConfig(kind="remote")  # endpoint required


def test_build_provider_kinds(tmp_path):
    assert isinstance(build_provider(ProviderConfig(kind="mock", dim=8)), MockProvider)
    path = tmp_path / "v.bin"
    write_vectors(path, ["k"], np.ones((1, 4), dtype=np.float32))
    p = build_provider(ProviderConfig(kind="precomputed", path=str(path)))
    assert p.dim == 4
    cached = build_provider(ProviderConfig(kind="mock", dim=8, cache=True))
    assert isinstance(cached, CachingProvider)

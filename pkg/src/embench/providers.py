"""Embedding sources: deterministic mock, precomputed vector files, remote service."""

from __future__ import annotations

import json
import os
import random
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from .hashing import fnv1a64

_MASK64 = (1 << 64) - 1

VECTOR_FILE_MAGIC = b"EMBV"
VECTOR_FILE_VERSION = 1


class ProviderError(RuntimeError):
    """An embedding source failed; message carries the failing key or status."""


class EmbeddingProvider(Protocol):
    dim: int

    def embed_batch(self, texts: list[str]) -> np.ndarray: ...


@dataclass(frozen=True)
class ProviderConfig:
    kind: str
    dim: int = 0
    normalize: bool = True
    batch_size: int = 64
    max_in_flight: int = 4
    max_retries: int = 3
    backoff_base_ms: int = 100
    timeout_s: float = 30.0
    endpoint: str = ""
    auth_token_env: str = ""
    model: str = "default"
    seed: int = 0
    path: str = ""
    cache: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "precomputed", "remote"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.kind == "mock" and self.dim < 1:
            raise ValueError("mock provider needs dim >= 1")
        if self.kind == "precomputed" and not self.path:
            raise ValueError("precomputed provider needs a path")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote provider needs an endpoint")


def load_provider_config(path: str | Path) -> ProviderConfig:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    kind = str(obj.get("kind", "")).lower()
    known = {f for f in ProviderConfig.__dataclass_fields__}
    unknown = [k for k in obj if k not in known]
    if unknown:
        raise ValueError(f"unknown provider config keys: {unknown}")
    obj["kind"] = kind
    return ProviderConfig(**obj)


def mock_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit vector: rng seeded by hash(text) xor seed, normal draws."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng((fnv1a64(text) ^ (seed & _MASK64)) & _MASK64)
    values = rng.standard_normal(dim)
    return (values / np.linalg.norm(values)).astype(np.float32)


class MockProvider:
    def __init__(self, dim: int, seed: int = 0, normalize: bool = True):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self.normalize = normalize

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            if self.normalize:
                out[i] = mock_embed(text, self.dim, self.seed)
            else:
                rng = np.random.default_rng((fnv1a64(text) ^ (self.seed & _MASK64)) & _MASK64)
                out[i] = rng.standard_normal(self.dim).astype(np.float32)
        return out


def write_vectors(path: str | Path, keys: list[str], vectors: np.ndarray) -> None:
    """Write a keyed vector file: header (magic, version, dim, count) then records."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or len(keys) != vectors.shape[0]:
        raise ValueError("vectors must be a 2d array aligned with keys")
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate keys")
    dim = vectors.shape[1]
    with open(path, "wb") as fh:
        fh.write(VECTOR_FILE_MAGIC)
        fh.write(struct.pack("<III", VECTOR_FILE_VERSION, dim, len(keys)))
        for key, row in zip(keys, vectors):
            encoded = key.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(row.tobytes())


@dataclass(frozen=True)
class PrecomputedStore:
    vectors: dict[str, np.ndarray]
    dim: int


def load_precomputed(path: str | Path) -> PrecomputedStore:
    """Load a keyed vector file; rejects short reads, NaNs, and duplicate keys."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != VECTOR_FILE_MAGIC:
            raise ProviderError(f"{path}: not a vector file (bad magic)")
        header = fh.read(12)
        if len(header) != 12:
            raise ProviderError(f"{path}: truncated header")
        version, dim, count = struct.unpack("<III", header)
        if version != VECTOR_FILE_VERSION:
            raise ProviderError(f"{path}: unsupported version {version}")
        vectors: dict[str, np.ndarray] = {}
        row_bytes = dim * 4
        for row in range(count):
            len_raw = fh.read(4)
            if len(len_raw) != 4:
                raise ProviderError(f"{path}: truncated at row {row}")
            (key_len,) = struct.unpack("<I", len_raw)
            key_raw = fh.read(key_len)
            data = fh.read(row_bytes)
            if len(key_raw) != key_len or len(data) != row_bytes:
                raise ProviderError(f"{path}: ragged row {row}")
            key = key_raw.decode("utf-8")
            if key in vectors:
                raise ProviderError(f"{path}: duplicate key {key!r} at row {row}")
            values = np.frombuffer(data, dtype="<f4").astype(np.float32)
            if not np.all(np.isfinite(values)):
                raise ProviderError(f"{path}: non-finite entry at row {row} (key {key!r})")
            vectors[key] = values
        if fh.read(1):
            raise ProviderError(f"{path}: trailing bytes after {count} rows")
    return PrecomputedStore(vectors=vectors, dim=dim)


class PrecomputedProvider:
    def __init__(self, store: PrecomputedStore, normalize: bool = True):
        self.store = store
        self.dim = store.dim
        self.normalize = normalize

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            vec = self.store.vectors.get(text)
            if vec is None:
                raise ProviderError(f"no precomputed vector for key {text!r}")
            if self.normalize:
                norm = float(np.linalg.norm(vec))
                if norm == 0.0:
                    raise ProviderError(f"zero vector for key {text!r}")
                vec = (vec / norm).astype(np.float32)
            out[i] = vec
        return out


class RemoteProvider:
    """Client for a POST {endpoint}/embed service returning {"embeddings": [...]}."""

    def __init__(self, cfg: ProviderConfig, client: httpx.Client | None = None):
        if not cfg.endpoint:
            raise ValueError("remote provider needs an endpoint")
        self.cfg = cfg
        self.dim = cfg.dim
        headers = {}
        if cfg.auth_token_env:
            token = os.environ.get(cfg.auth_token_env)
            if token is None:
                raise ProviderError(f"auth environment variable {cfg.auth_token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        self._url = cfg.endpoint.rstrip("/") + "/embed"
        self._client = client if client is not None else httpx.Client(
            timeout=cfg.timeout_s, headers=headers
        )

    def _embed_chunk(self, texts: list[str]) -> np.ndarray:
        cfg = self.cfg
        last_error: ProviderError | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                # Exponential backoff with jitter; retried statuses only.
                delay = (cfg.backoff_base_ms / 1000.0) * (2 ** (attempt - 1))
                time.sleep(delay * (1.0 + 0.25 * random.random()))
            try:
                resp = self._client.post(self._url, json={"model": cfg.model, "texts": texts})
            except httpx.TransportError as exc:
                last_error = ProviderError(f"transport error: {exc}")
                continue
            if resp.status_code == 200:
                rows = resp.json().get("embeddings")
                if not isinstance(rows, list) or len(rows) != len(texts):
                    raise ProviderError(
                        f"response embeddings misaligned: got {len(rows or [])}, want {len(texts)}"
                    )
                arr = np.asarray(rows, dtype=np.float32)
                if arr.ndim != 2:
                    raise ProviderError("response embeddings are ragged")
                if self.cfg.dim and arr.shape[1] != self.cfg.dim:
                    raise ProviderError(
                        f"dimension mismatch: service returned {arr.shape[1]}, config says {self.cfg.dim}"
                    )
                return arr
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = ProviderError(f"retryable status {resp.status_code}")
                continue
            raise ProviderError(f"embedding request failed with status {resp.status_code}")
        assert last_error is not None
        raise last_error

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        cfg = self.cfg
        chunks = [texts[i : i + cfg.batch_size] for i in range(0, len(texts), cfg.batch_size)]
        if not chunks:
            return np.empty((0, self.dim or 0), dtype=np.float32)
        if len(chunks) == 1:
            parts = [self._embed_chunk(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
                parts = list(pool.map(self._embed_chunk, chunks))
        out = np.vstack(parts)
        if cfg.normalize:
            norms = np.linalg.norm(out, axis=1, keepdims=True)
            if np.any(norms == 0.0):
                raise ProviderError("service returned a zero vector")
            out = (out / norms).astype(np.float32)
        if not self.dim:
            self.dim = out.shape[1]
        return out


class CachingProvider:
    """Memoizes per-text vectors; never changes values, only inner call counts."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.dim = inner.dim
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.inner_calls = 0
        self.inner_texts = 0

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            vectors = self.inner.embed_batch(missing)
            with self._lock:
                self.inner_calls += 1
                self.inner_texts += len(missing)
                for text, vec in zip(missing, vectors):
                    self._cache[text] = vec
        with self._lock:
            rows = [self._cache[t] for t in texts]
        if not rows:
            return np.empty((0, self.dim or 0), dtype=np.float32)
        return np.stack(rows)


def build_provider(cfg: ProviderConfig) -> EmbeddingProvider:
    provider: EmbeddingProvider
    if cfg.kind == "mock":
        if cfg.dim < 2:
            raise ValueError("mock provider needs dim >= 2")
        provider = MockProvider(dim=cfg.dim, seed=cfg.seed, normalize=cfg.normalize)
    elif cfg.kind == "precomputed":
        if not cfg.path:
            raise ValueError("precomputed provider needs a path")
        store = load_precomputed(cfg.path)
        if cfg.dim and store.dim != cfg.dim:
            raise ProviderError(
                f"dimension mismatch: file has {store.dim}, config says {cfg.dim}"
            )
        provider = PrecomputedProvider(store, normalize=cfg.normalize)
    else:
        provider = RemoteProvider(cfg)
    if cfg.cache:
        provider = CachingProvider(provider)
    return provider

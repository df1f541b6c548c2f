"""Linear adapter over frozen embeddings: contrastive training and checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .records import TripletRecord

CHECKPOINT_MAGIC = b"ADPT"
CHECKPOINT_VERSION = 1

LR_CONSTANT = "constant"
LR_LINEAR_DECAY = "linear_decay"


@dataclass(frozen=True)
class AdapterParams:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ValueError(f"shape mismatch: W {W.shape}, b {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("adapter parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def d_out(self) -> int:
        return self.W.shape[0]

    @property
    def d_in(self) -> int:
        return self.W.shape[1]


def identity_params(d_in: int, d_out: int | None = None) -> AdapterParams:
    """Truncated-identity weights (zero rows pad when d_out exceeds d_in), zero bias."""
    if d_out is None:
        d_out = d_in
    return AdapterParams(W=np.eye(d_out, d_in), b=np.zeros(d_out))


def random_params(d_in: int, d_out: int, seed: int) -> AdapterParams:
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((d_out, d_in)) / np.sqrt(d_in)
    return AdapterParams(W=W, b=np.zeros(d_out))


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.05
    learning_rate: float = 1e-4
    steps: int = 1000
    batch_size: int = 32
    bidirectional: bool = True
    in_batch_negatives: bool = True
    unmixed_batches: bool = True
    seed: int = 0
    warmup_steps: int = 0
    lr_schedule: str = LR_LINEAR_DECAY
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.warmup_steps <= max(self.steps, 0):
            raise ValueError("warmup_steps must lie in [0, steps]")
        if self.lr_schedule not in (LR_CONSTANT, LR_LINEAR_DECAY):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.momentum < 0.0:
            raise ValueError("momentum must be non-negative")


def load_train_config(path: str | Path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "lr_schedule" in obj:
        schedule = str(obj["lr_schedule"]).strip()
        normalized = schedule.lower().replace("-", "_")
        if normalized == "lineardecay":
            normalized = LR_LINEAR_DECAY
        obj["lr_schedule"] = normalized
    known = set(TrainConfig.__dataclass_fields__)
    unknown = [k for k in obj if k not in known]
    if unknown:
        raise ValueError(f"unknown train config keys: {unknown}")
    return TrainConfig(**obj)


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    loss: float
    lr: float


@dataclass(frozen=True)
class TrainHistory:
    entries: tuple[HistoryEntry, ...]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e in self.entries:
                fh.write(json.dumps({"step": e.step, "loss": e.loss, "lr": e.lr}) + "\n")


@dataclass(frozen=True)
class TripletEmbedding:
    """Frozen base embeddings for one triplet: query, positive, negatives (k-1, d)."""

    query: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray


def project(params: AdapterParams, e: np.ndarray | Sequence[float]) -> np.ndarray:
    """L2-normalized W e + b; errors if the pre-normalization vector is zero."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (params.d_in,):
        raise ValueError(f"dimension mismatch: embedding {e.shape}, adapter d_in {params.d_in}")
    z = params.W @ e + params.b
    norm = np.linalg.norm(z)
    if norm == 0.0:
        raise ValueError("projection produced a zero vector")
    return z / norm


def _project_rows(params: AdapterParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Z = X @ params.W.T + params.b
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("projection produced a zero vector")
    return Z / norms[:, None], norms


def contrastive_loss(
    batch: Sequence[TripletEmbedding], params: AdapterParams, cfg: TrainConfig
) -> tuple[float, AdapterParams]:
    """Softmax cross-entropy over temperature-scaled cosines of projected vectors.

    Forward treats each query as the anchor against its positive, its own negatives,
    and (optionally) the other positives in the batch. The backward direction of the
    bidirectional mode anchors the positive against its query, shares the query-side
    negative scores, and (optionally) takes the other queries as negatives.
    Returns the batch-mean loss and exact analytic gradients shaped like the params.
    """
    if not batch:
        raise ValueError("empty batch")
    if cfg.temperature <= 0.0:
        raise ValueError("temperature must be positive")
    B = len(batch)
    d_in = params.d_in
    tau = cfg.temperature

    neg_counts = []
    rows = []
    for t in batch:
        q = np.asarray(t.query, dtype=np.float64)
        p = np.asarray(t.positive, dtype=np.float64)
        negs = np.asarray(t.negatives, dtype=np.float64)
        if negs.ndim == 1:
            negs = negs[None, :]
        if negs.shape[0] < 1:
            raise ValueError("every triplet needs at least one negative")
        if q.shape != (d_in,) or p.shape != (d_in,) or negs.shape[1] != d_in:
            raise ValueError("triplet embedding dimension mismatch")
        neg_counts.append(negs.shape[0])
        rows.append(q)
        rows.append(p)
        rows.extend(negs)
    X = np.stack(rows)
    U, norms = _project_rows(params, X)

    # Row layout per triplet i at offset o_i: query, positive, then its negatives.
    offsets = np.concatenate([[0], np.cumsum([2 + c for c in neg_counts])])
    q_idx = offsets[:-1]
    p_idx = offsets[:-1] + 1
    Uq = U[q_idx]
    Up = U[p_idx]
    S_qp = Uq @ Up.T

    G_U = np.zeros_like(U)
    total = 0.0
    row_weight = 1.0 / B
    directions = 2 if cfg.bidirectional else 1
    per_direction = row_weight / directions

    def accumulate(scores: np.ndarray, pairs: list[tuple[int, int]], weight: float) -> float:
        scaled = scores / tau
        shift = np.max(scaled)
        exp = np.exp(scaled - shift)
        denom = float(np.sum(exp))
        loss_row = float(np.log(denom) + shift - scaled[0])
        probs = exp / denom
        coeff = probs / tau
        coeff[0] -= 1.0 / tau
        for c, (a, b_) in zip(coeff, pairs):
            G_U[a] += weight * c * U[b_]
            G_U[b_] += weight * c * U[a]
        return loss_row

    for i in range(B):
        qi = q_idx[i]
        pi = p_idx[i]
        ni = np.arange(offsets[i] + 2, offsets[i + 1])
        s_qn = U[ni] @ U[qi]

        forward_scores = [S_qp[i, i]]
        forward_pairs: list[tuple[int, int]] = [(qi, pi)]
        forward_scores.extend(s_qn)
        forward_pairs.extend((qi, int(n)) for n in ni)
        if cfg.in_batch_negatives:
            for j in range(B):
                if j != i:
                    forward_scores.append(S_qp[i, j])
                    forward_pairs.append((qi, int(p_idx[j])))
        total += per_direction * accumulate(
            np.asarray(forward_scores), forward_pairs, per_direction
        )

        if cfg.bidirectional:
            backward_scores = [S_qp[i, i]]
            backward_pairs: list[tuple[int, int]] = [(pi, qi)]
            backward_scores.extend(s_qn)
            backward_pairs.extend((qi, int(n)) for n in ni)
            if cfg.in_batch_negatives:
                for j in range(B):
                    if j != i:
                        backward_scores.append(float(Up[i] @ Uq[j]))
                        backward_pairs.append((pi, int(q_idx[j])))
            total += per_direction * accumulate(
                np.asarray(backward_scores), backward_pairs, per_direction
            )

    # Backpropagate through row normalization: du/dz = (I - u u^T) / ||z||.
    G_Z = (G_U - np.sum(G_U * U, axis=1, keepdims=True) * U) / norms[:, None]
    grad_W = G_Z.T @ X
    grad_b = G_Z.sum(axis=0)
    return total, AdapterParams(W=grad_W, b=grad_b)


def finite_diff_check(
    params: AdapterParams,
    batch: Sequence[TripletEmbedding],
    cfg: TrainConfig,
    h: float = 1e-5,
) -> float:
    """Central-difference check of every W and b coordinate; returns max relative error.

    The default step sits near the float64 optimum for central differences;
    coarser steps leak O(h^2) truncation error into small-gradient coordinates.
    """
    if params.d_in * params.d_out > 500:
        raise ValueError("finite_diff_check is limited to d_in * d_out <= 500")

    def loss_at(W: np.ndarray, b: np.ndarray) -> float:
        return contrastive_loss(batch, AdapterParams(W=W, b=b), cfg)[0]

    _, grads = contrastive_loss(batch, params, cfg)
    max_rel = 0.0

    def rel(analytic: float, fd: float) -> float:
        return abs(analytic - fd) / max(1e-8, abs(fd))

    for i in range(params.d_out):
        for j in range(params.d_in):
            W_plus = params.W.copy()
            W_minus = params.W.copy()
            W_plus[i, j] += h
            W_minus[i, j] -= h
            fd = (loss_at(W_plus, params.b) - loss_at(W_minus, params.b)) / (2 * h)
            max_rel = max(max_rel, rel(grads.W[i, j], fd))
    for i in range(params.d_out):
        b_plus = params.b.copy()
        b_minus = params.b.copy()
        b_plus[i] += h
        b_minus[i] -= h
        fd = (loss_at(params.W, b_plus) - loss_at(params.W, b_minus)) / (2 * h)
        max_rel = max(max_rel, rel(grads.b[i], fd))
    return max_rel


def _lr_at(cfg: TrainConfig, step: int) -> float:
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    if cfg.lr_schedule == LR_LINEAR_DECAY:
        denom = max(1, cfg.steps - cfg.warmup_steps)
        return cfg.learning_rate * (cfg.steps - step) / denom
    return cfg.learning_rate


def train(
    triplets: Sequence[TripletRecord],
    base_provider,
    cfg: TrainConfig,
    init: str = "identity",
    d_out: int | None = None,
    tags: Sequence[str] | None = None,
) -> tuple[AdapterParams, TrainHistory]:
    """SGD over the contrastive objective; deterministic for a fixed seed.

    `tags` labels each triplet with its source dataset; with unmixed_batches every
    batch is drawn from one tag (round-robin over tags in sorted order).
    """
    if not triplets:
        raise ValueError("no training triplets")
    if tags is not None and len(tags) != len(triplets):
        raise ValueError("tags must align with triplets")
    d_in = base_provider.dim
    if d_out is None:
        d_out = d_in
    if init == "identity":
        params = identity_params(d_in, d_out)
    elif init == "random":
        params = random_params(d_in, d_out, cfg.seed)
    else:
        raise ValueError(f"unknown init {init!r}")

    texts: list[str] = []
    for t in triplets:
        texts.append(t.input_text)
        texts.append(t.positive_text)
        texts.extend(t.negative_texts)
    unique = list(dict.fromkeys(texts))
    matrix = np.asarray(base_provider.embed_batch(unique), dtype=np.float64)
    if matrix.shape[1] != d_in:
        raise ValueError(f"provider dim {matrix.shape[1]} does not match d_in {d_in}")
    row = {text: i for i, text in enumerate(unique)}
    embedded = [
        TripletEmbedding(
            query=matrix[row[t.input_text]],
            positive=matrix[row[t.positive_text]],
            negatives=matrix[[row[n] for n in t.negative_texts]],
        )
        for t in triplets
    ]

    if tags is None:
        tags = ["default"] * len(triplets)
    grouped: dict[str, list[int]] = {}
    for i, tag in enumerate(tags):
        grouped.setdefault(tag, []).append(i)
    by_tag = {tag: np.asarray(idx) for tag, idx in grouped.items()}
    tag_order = sorted(by_tag)

    rng = np.random.default_rng(cfg.seed)
    W = params.W.copy()
    b = params.b.copy()
    vel_W = np.zeros_like(W)
    vel_b = np.zeros_like(b)
    entries: list[HistoryEntry] = []
    for step in range(cfg.steps):
        if cfg.unmixed_batches:
            pool = by_tag[tag_order[step % len(tag_order)]]
        else:
            pool = np.arange(len(embedded))
        size = min(cfg.batch_size, len(pool))
        chosen = rng.choice(pool, size=size, replace=False)
        batch = [embedded[int(i)] for i in chosen]
        lr = _lr_at(cfg, step)
        loss, grads = contrastive_loss(batch, AdapterParams(W=W, b=b), cfg)
        if cfg.momentum > 0.0:
            vel_W = cfg.momentum * vel_W - lr * grads.W
            vel_b = cfg.momentum * vel_b - lr * grads.b
            W = W + vel_W
            b = b + vel_b
        else:
            W = W - lr * grads.W
            b = b - lr * grads.b
        entries.append(HistoryEntry(step=step, loss=loss, lr=lr))
    return AdapterParams(W=W, b=b), TrainHistory(entries=tuple(entries))


class AdapterProvider:
    """Base provider composed with a trained adapter; output is the projected vector."""

    def __init__(self, base, params: AdapterParams):
        if base.dim != params.d_in:
            raise ValueError(f"adapter d_in {params.d_in} does not match provider dim {base.dim}")
        self.base = base
        self.params = params
        self.dim = params.d_out

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        E = np.asarray(self.base.embed_batch(texts), dtype=np.float64)
        U, _ = _project_rows(self.params, E)
        return U.astype(np.float32)


def save_checkpoint(path: str | Path, params: AdapterParams) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, params.d_in, params.d_out))
        fh.write(params.W.astype("<f4").tobytes())
        fh.write(params.b.astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> AdapterParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not an adapter checkpoint (bad magic)")
        header = fh.read(12)
        if len(header) != 12:
            raise ValueError(f"{path}: truncated header")
        version, d_in, d_out = struct.unpack("<III", header)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        w_bytes = fh.read(d_out * d_in * 4)
        b_bytes = fh.read(d_out * 4)
        if len(w_bytes) != d_out * d_in * 4 or len(b_bytes) != d_out * 4:
            raise ValueError(f"{path}: truncated parameter data")
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes")
    W = np.frombuffer(w_bytes, dtype="<f4").reshape(d_out, d_in)
    b = np.frombuffer(b_bytes, dtype="<f4")
    return AdapterParams(W=W.astype(np.float64), b=b.astype(np.float64))

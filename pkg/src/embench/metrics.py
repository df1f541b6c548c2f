"""Similarity computation, category metrics, and analytic random baselines."""

from __future__ import annotations

import math
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .labels import get_label_spec
from .records import (
    BitextExample,
    ClassificationExample,
    EvalReport,
    LabelSpec,
    PairExample,
    RerankingExample,
    RetrievalTask,
    TaskCategory,
)


class LabelRender(str, Enum):
    PLAIN = "plain"
    WITH_EXPLANATION = "with_explanation"


def cosine(u: np.ndarray | Sequence[float], v: np.ndarray | Sequence[float]) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero-norm input")
    return float(np.dot(u, v) / (nu * nv))


def similarity_matrix(
    queries: np.ndarray | Sequence[Sequence[float]],
    candidates: np.ndarray | Sequence[Sequence[float]],
) -> np.ndarray:
    """Pairwise cosine scores, rows = queries, cols = candidates."""
    Q = np.asarray(queries, dtype=np.float64)
    C = np.asarray(candidates, dtype=np.float64)
    if Q.ndim != 2 or C.ndim != 2 or Q.shape[1] != C.shape[1]:
        raise ValueError(f"dimension mismatch: {Q.shape} vs {C.shape}")
    qn = np.linalg.norm(Q, axis=1, keepdims=True)
    cn = np.linalg.norm(C, axis=1, keepdims=True)
    if np.any(qn == 0.0) or np.any(cn == 0.0):
        raise ValueError("cosine undefined for zero-norm input")
    return (Q / qn) @ (C / cn).T


def average_precision(ranking: Sequence[bool]) -> float:
    """AP over a ranked relevance list: mean over relevant positions of precision@p."""
    if not any(ranking):
        raise ValueError("average_precision needs at least one relevant entry")
    hits = 0
    precisions = []
    for position, relevant in enumerate(ranking, start=1):
        if relevant:
            hits += 1
            precisions.append(hits / position)
    return sum(precisions) / len(precisions)


def ndcg_at_k(ranking: Sequence[str], relevant: Iterable[str], k: int) -> float:
    """nDCG@k with unit gains and 1/log2(rank+1) discounts; 0 if nothing relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant_set = set(relevant)
    if not relevant_set:
        return 0.0
    dcg = 0.0
    for rank, doc_id in enumerate(ranking[:k], start=1):
        if doc_id in relevant_set:
            dcg += 1.0 / math.log2(rank + 1)
    ideal_hits = min(k, len(relevant_set))
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, ideal_hits + 1))
    return dcg / idcg if idcg > 0.0 else 0.0


def _embed_normalized(provider, texts: list[str]) -> tuple[np.ndarray, dict[str, int]]:
    """Embed unique texts once; return unit-normalized float64 rows plus an index."""
    unique = list(dict.fromkeys(texts))
    raw = np.asarray(provider.embed_batch(unique), dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("provider returned a zero-norm embedding")
    return raw / norms, {t: i for i, t in enumerate(unique)}


def render_label(label: str, render: LabelRender, spec: LabelSpec | None = None) -> str:
    if render is LabelRender.PLAIN:
        return label
    if spec is None:
        spec = get_label_spec(label)
    return f"{label}. {spec.explanation}"


def eval_classification(
    examples: Sequence[ClassificationExample],
    provider,
    label_render: LabelRender = LabelRender.PLAIN,
    label_specs: Mapping[str, LabelSpec] | None = None,
    task_name: str = "classification",
) -> EvalReport:
    """Accuracy of nearest-label prediction; ties go to the lowest candidate index."""
    if not examples:
        raise ValueError("no examples")
    rendered: dict[str, str] = {}
    for ex in examples:
        for label in ex.candidate_labels:
            if label not in rendered:
                spec = label_specs.get(label) if label_specs is not None else None
                rendered[label] = render_label(label, label_render, spec)
    texts = [ex.input_text for ex in examples]
    texts.extend(rendered.values())
    vectors, index = _embed_normalized(provider, texts)
    correct = 0
    for ex in examples:
        q = vectors[index[ex.input_text]]
        cand = vectors[[index[rendered[label]] for label in ex.candidate_labels]]
        scores = cand @ q
        if int(np.argmax(scores)) == ex.gold_index:
            correct += 1
    baseline = sum(1.0 / len(ex.candidate_labels) for ex in examples) / len(examples)
    return EvalReport(
        task_name=task_name,
        category=TaskCategory.CLASSIFICATION,
        metric_name="accuracy",
        value=correct / len(examples),
        random_baseline=baseline,
        n_examples=len(examples),
    )


def eval_reranking(
    examples: Sequence[RerankingExample], provider, task_name: str = "reranking"
) -> EvalReport:
    """Mean average precision; candidates ranked by cosine, positives listed first."""
    if not examples:
        raise ValueError("no examples")
    texts = []
    for ex in examples:
        texts.append(ex.query)
        texts.extend(ex.positives)
        texts.extend(ex.negatives)
    vectors, index = _embed_normalized(provider, texts)
    ap_values = []
    baseline_values = []
    baseline_cache: dict[tuple[int, int], float] = {}
    for ex in examples:
        q = vectors[index[ex.query]]
        candidates = list(ex.positives) + list(ex.negatives)
        relevance = [True] * len(ex.positives) + [False] * len(ex.negatives)
        scores = vectors[[index[c] for c in candidates]] @ q
        order = np.argsort(-scores, kind="stable")
        ap_values.append(average_precision([relevance[i] for i in order]))
        key = (len(ex.positives), len(ex.negatives))
        if key not in baseline_cache:
            baseline_cache[key] = random_baseline(
                TaskCategory.RERANKING, {"n_pos": key[0], "n_neg": key[1]}
            )
        baseline_values.append(baseline_cache[key])
    return EvalReport(
        task_name=task_name,
        category=TaskCategory.RERANKING,
        metric_name="map",
        value=sum(ap_values) / len(ap_values),
        random_baseline=sum(baseline_values) / len(baseline_values),
        n_examples=len(examples),
    )


def eval_retrieval(
    task: RetrievalTask, provider, k: int = 10, task_name: str = "retrieval"
) -> EvalReport:
    """Mean nDCG@k over queries, with mean recall@k carried in extras."""
    if not task.queries:
        raise ValueError("no queries")
    if not task.corpus:
        raise ValueError("empty corpus")
    texts = [text for _, text in task.queries] + [text for _, text in task.corpus]
    vectors, index = _embed_normalized(provider, texts)
    doc_ids = [did for did, _ in task.corpus]
    doc_rows = vectors[[index[text] for _, text in task.corpus]]
    ndcg_values = []
    recall_values = []
    for qid, qtext in task.queries:
        scores = doc_rows @ vectors[index[qtext]]
        order = np.argsort(-scores, kind="stable")[:k]
        ranked_ids = [doc_ids[i] for i in order]
        relevant = task.qrels.get(qid, frozenset())
        ndcg_values.append(ndcg_at_k(ranked_ids, relevant, k))
        if relevant:
            recall_values.append(len(set(ranked_ids) & relevant) / len(relevant))
    n_docs = len(task.corpus)
    return EvalReport(
        task_name=task_name,
        category=TaskCategory.RETRIEVAL,
        metric_name=f"ndcg@{k}",
        value=sum(ndcg_values) / len(ndcg_values),
        random_baseline=random_baseline(TaskCategory.RETRIEVAL, {"k": k, "n": n_docs}),
        n_examples=len(task.queries),
        extras={
            f"recall@{k}": sum(recall_values) / len(recall_values) if recall_values else 0.0
        },
    )


def best_threshold_accuracy(similarities: Sequence[float], matches: Sequence[bool]) -> float:
    """Max accuracy over thresholds at midpoints of consecutive distinct sims and ±inf."""
    sims = np.asarray(similarities, dtype=np.float64)
    labels = np.asarray(matches, dtype=bool)
    distinct = np.unique(sims)
    thresholds = [-math.inf, math.inf]
    thresholds.extend((distinct[i] + distinct[i + 1]) / 2.0 for i in range(len(distinct) - 1))
    best = 0.0
    for threshold in thresholds:
        predicted = sims > threshold
        best = max(best, float(np.mean(predicted == labels)))
    return best


def eval_pairwise(
    pairs: Sequence[PairExample], provider, task_name: str = "pairwise"
) -> EvalReport:
    if not pairs:
        raise ValueError("no pairs")
    n_match = sum(1 for p in pairs if p.is_match)
    if n_match == 0 or n_match == len(pairs):
        raise ValueError("pairwise evaluation needs both classes present")
    texts = []
    for pair in pairs:
        texts.append(pair.text_a)
        texts.append(pair.text_b)
    vectors, index = _embed_normalized(provider, texts)
    sims = [
        float(vectors[index[p.text_a]] @ vectors[index[p.text_b]]) for p in pairs
    ]
    matches = [p.is_match for p in pairs]
    baseline = random_baseline(
        TaskCategory.PAIRWISE_CLASSIFICATION,
        {"n_match": n_match, "n_non": len(pairs) - n_match},
    )
    return EvalReport(
        task_name=task_name,
        category=TaskCategory.PAIRWISE_CLASSIFICATION,
        metric_name="max_accuracy",
        value=best_threshold_accuracy(sims, matches),
        random_baseline=baseline,
        n_examples=len(pairs),
    )


def eval_bitext(
    examples: Sequence[BitextExample],
    provider,
    symmetric: bool = False,
    task_name: str = "bitext",
) -> EvalReport:
    """Accuracy of nearest-target matching over the full target pool."""
    if len(examples) < 2:
        raise ValueError("bitext evaluation needs at least 2 examples")
    texts = [ex.source_text for ex in examples] + [ex.target_text for ex in examples]
    vectors, index = _embed_normalized(provider, texts)
    src = vectors[[index[ex.source_text] for ex in examples]]
    tgt = vectors[[index[ex.target_text] for ex in examples]]
    scores = src @ tgt.T
    forward = float(np.mean(np.argmax(scores, axis=1) == np.arange(len(examples))))
    value = forward
    if symmetric:
        backward = float(np.mean(np.argmax(scores, axis=0) == np.arange(len(examples))))
        value = (forward + backward) / 2.0
    return EvalReport(
        task_name=task_name,
        category=TaskCategory.BITEXT_MINING,
        metric_name="accuracy",
        value=value,
        random_baseline=random_baseline(TaskCategory.BITEXT_MINING, {"n": len(examples)}),
        n_examples=len(examples),
    )


_MC_SAMPLES = 100_000


def _expected_ap(n_pos: int, n_neg: int) -> float:
    total = n_pos + n_neg
    if total <= 6:
        values = []
        for positions in combinations(range(total), n_pos):
            ranking = [i in positions for i in range(total)]
            values.append(average_precision(ranking))
        return sum(values) / len(values)
    rng = np.random.default_rng(0)
    base = np.array([True] * n_pos + [False] * n_neg)
    acc = 0.0
    for _ in range(_MC_SAMPLES):
        acc += average_precision(rng.permutation(base).tolist())
    return acc / _MC_SAMPLES


def random_baseline(category: TaskCategory, params: Mapping[str, int]) -> float:
    """Analytic chance-level score for a task shape."""
    try:
        if category is TaskCategory.CLASSIFICATION:
            k = int(params["k"])
            if k < 2:
                raise ValueError("classification needs k >= 2")
            return 1.0 / k
        if category is TaskCategory.RERANKING:
            n_pos = int(params["n_pos"])
            n_neg = int(params["n_neg"])
            if n_pos < 1 or n_neg < 1:
                raise ValueError("reranking needs n_pos >= 1 and n_neg >= 1")
            return _expected_ap(n_pos, n_neg)
        if category is TaskCategory.PAIRWISE_CLASSIFICATION:
            n_match = int(params["n_match"])
            n_non = int(params["n_non"])
            if n_match < 0 or n_non < 0 or n_match + n_non == 0:
                raise ValueError("pairwise needs non-negative class counts, at least one pair")
            return max(n_match, n_non) / (n_match + n_non)
        if category is TaskCategory.BITEXT_MINING:
            n = int(params["n"])
            if n < 1:
                raise ValueError("bitext needs n >= 1")
            return 1.0 / n
        if category is TaskCategory.RETRIEVAL:
            k = int(params["k"])
            n = int(params["n"])
            if k < 1 or n < 1:
                raise ValueError("retrieval needs k >= 1 and n >= 1")
            return min(1.0, k / n)
    except KeyError as exc:
        raise ValueError(f"missing baseline parameter for {category.value}: {exc}") from None
    raise ValueError(f"unknown category {category!r}")

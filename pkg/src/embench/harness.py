"""Run manifests: load task sets, evaluate them against a provider, emit reports."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import metrics
from .adapter import AdapterProvider, load_checkpoint
from .metrics import LabelRender, random_baseline
from .providers import EmbeddingProvider, ProviderConfig, build_provider, load_provider_config
from .records import (
    EvalReport,
    TaskCategory,
    dumps_record,
    read_task_file,
    validate_task_file,
)


class ManifestError(ValueError):
    """The run manifest is missing files or internally inconsistent."""


_CANONICAL_METRIC = {
    TaskCategory.CLASSIFICATION: "accuracy",
    TaskCategory.RERANKING: "map",
    TaskCategory.PAIRWISE_CLASSIFICATION: "max_accuracy",
    TaskCategory.BITEXT_MINING: "accuracy",
}


@dataclass(frozen=True)
class TaskEntry:
    task_name: str
    category: TaskCategory
    path: Path
    metric_name: str
    label_render: LabelRender = LabelRender.PLAIN
    k: int = 10
    symmetric: bool = False


@dataclass(frozen=True)
class RunManifest:
    tasks: tuple[TaskEntry, ...]
    provider_config: ProviderConfig
    output_dir: Path
    adapter_checkpoint: Path | None = None


def _parse_task_entry(obj: dict, base_dir: Path) -> TaskEntry:
    category = TaskCategory(obj["category"])
    k = int(obj.get("k", 10))
    if category is TaskCategory.RETRIEVAL:
        default_metric = f"ndcg@{k}"
    else:
        default_metric = _CANONICAL_METRIC[category]
    metric_name = obj.get("metric_name", default_metric)
    if category is TaskCategory.RETRIEVAL:
        if metric_name.startswith("ndcg@"):
            k = int(metric_name.split("@", 1)[1])
        else:
            raise ManifestError(f"{obj['task_name']}: retrieval metric must be ndcg@<k>")
    elif metric_name != _CANONICAL_METRIC[category]:
        raise ManifestError(
            f"{obj['task_name']}: metric {metric_name!r} does not fit {category.value}"
        )
    return TaskEntry(
        task_name=str(obj["task_name"]),
        category=category,
        path=base_dir / obj["path"],
        metric_name=metric_name,
        label_render=LabelRender(obj.get("label_render", "plain")),
        k=k,
        symmetric=bool(obj.get("symmetric", False)),
    )


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    base_dir = path.parent
    raw_tasks = obj.get("tasks", [])
    if not raw_tasks:
        raise ManifestError(f"{path}: no tasks")
    try:
        tasks = tuple(_parse_task_entry(t, base_dir) for t in raw_tasks)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"{path}: {exc}") from exc
    names = [t.task_name for t in tasks]
    if len(set(names)) != len(names):
        raise ManifestError(f"{path}: duplicate task_name")
    for task in tasks:
        if task.category is TaskCategory.RETRIEVAL:
            if not task.path.is_dir():
                raise ManifestError(f"{path}: missing retrieval directory {task.path}")
        elif not task.path.is_file():
            raise ManifestError(f"{path}: missing task file {task.path}")
    if "provider" in obj:
        provider_config = ProviderConfig(**{**obj["provider"], "kind": obj["provider"]["kind"].lower()})
    elif "provider_config" in obj:
        provider_config = load_provider_config(base_dir / obj["provider_config"])
    else:
        raise ManifestError(f"{path}: provider or provider_config required")
    adapter_path = obj.get("adapter_checkpoint")
    if adapter_path is not None:
        adapter_path = base_dir / adapter_path
        if not adapter_path.is_file():
            raise ManifestError(f"{path}: missing adapter checkpoint {adapter_path}")
    return RunManifest(
        tasks=tasks,
        provider_config=provider_config,
        output_dir=base_dir / obj.get("output_dir", "results"),
        adapter_checkpoint=adapter_path,
    )


def evaluate_task(entry: TaskEntry, provider: EmbeddingProvider) -> EvalReport:
    if entry.category is TaskCategory.CLASSIFICATION:
        examples = read_task_file(entry.path, entry.category)
        return metrics.eval_classification(
            examples, provider, entry.label_render, task_name=entry.task_name
        )
    if entry.category is TaskCategory.RERANKING:
        examples = read_task_file(entry.path, entry.category)
        return metrics.eval_reranking(examples, provider, task_name=entry.task_name)
    if entry.category is TaskCategory.RETRIEVAL:
        (task,) = read_task_file(entry.path, entry.category)
        return metrics.eval_retrieval(task, provider, k=entry.k, task_name=entry.task_name)
    if entry.category is TaskCategory.PAIRWISE_CLASSIFICATION:
        pairs = read_task_file(entry.path, entry.category)
        return metrics.eval_pairwise(pairs, provider, task_name=entry.task_name)
    examples = read_task_file(entry.path, entry.category)
    return metrics.eval_bitext(
        examples, provider, symmetric=entry.symmetric, task_name=entry.task_name
    )


@dataclass(frozen=True)
class TaskFailure:
    task_name: str
    message: str


def evaluate_manifest(
    manifest: RunManifest, jobs: int = 1
) -> tuple[list[EvalReport], list[TaskFailure]]:
    """Evaluate every task; per-task failures are recorded, not fatal."""
    provider = build_provider(manifest.provider_config)
    if manifest.adapter_checkpoint is not None:
        provider = AdapterProvider(provider, load_checkpoint(manifest.adapter_checkpoint))

    def run(entry: TaskEntry):
        try:
            return evaluate_task(entry, provider)
        except Exception as exc:
            return TaskFailure(task_name=entry.task_name, message=str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, manifest.tasks))
    else:
        outcomes = [run(entry) for entry in manifest.tasks]
    reports = [o for o in outcomes if isinstance(o, EvalReport)]
    failures = [o for o in outcomes if isinstance(o, TaskFailure)]
    return reports, failures


def write_results(
    reports: list[EvalReport], output_dir: str | Path, name: str = "results.jsonl"
) -> Path:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    out_path = output_dir / name
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for report in reports:
            fh.write(dumps_record(report) + "\n")
    return out_path


def format_table(reports: list[EvalReport], failures: Sequence[TaskFailure] = ()) -> str:
    """Aligned text table with the layout Task | Metric | Random | Score."""
    rows = [("Task", "Metric", "Random", "Score")]
    for r in reports:
        rows.append(
            (r.task_name, r.metric_name, f"{100 * r.random_baseline:.2f}", f"{100 * r.value:.2f}")
        )
    for f in failures:
        rows.append((f.task_name, "-", "-", "FAILED"))
    widths = [max(len(row[c]) for row in rows) for c in range(4)]
    lines = []
    header = "  ".join(rows[0][c].ljust(widths[c]) for c in range(4)).rstrip()
    lines.append(header)
    lines.append("  ".join("-" * widths[c] for c in range(4)))
    for row in rows[1:]:
        lines.append("  ".join(row[c].ljust(widths[c]) for c in range(4)).rstrip())
    return "\n".join(lines)


def format_csv(reports: list[EvalReport]) -> str:
    lines = ["task_name,category,metric_name,value,random_baseline,n_examples"]
    for r in reports:
        lines.append(
            f"{r.task_name},{r.category.value},{r.metric_name},"
            f"{r.value!r},{r.random_baseline!r},{r.n_examples}"
        )
    return "\n".join(lines)


def _task_shape_params(entry: TaskEntry) -> tuple[TaskCategory, dict[str, int], int]:
    """Load a task file only to extract the shape parameters its baseline needs."""
    if entry.category is TaskCategory.CLASSIFICATION:
        examples = read_task_file(entry.path, entry.category)
        ks = sorted({len(e.candidate_labels) for e in examples})
        return entry.category, {"k": ks[0]}, len(examples)
    if entry.category is TaskCategory.RERANKING:
        examples = read_task_file(entry.path, entry.category)
        shapes = sorted({(len(e.positives), len(e.negatives)) for e in examples})
        n_pos, n_neg = shapes[0]
        return entry.category, {"n_pos": n_pos, "n_neg": n_neg}, len(examples)
    if entry.category is TaskCategory.RETRIEVAL:
        (task,) = read_task_file(entry.path, entry.category)
        return entry.category, {"k": entry.k, "n": len(task.corpus)}, len(task.queries)
    if entry.category is TaskCategory.PAIRWISE_CLASSIFICATION:
        pairs = read_task_file(entry.path, entry.category)
        n_match = sum(1 for p in pairs if p.is_match)
        return entry.category, {"n_match": n_match, "n_non": len(pairs) - n_match}, len(pairs)
    examples = read_task_file(entry.path, entry.category)
    return entry.category, {"n": len(examples)}, len(examples)


def baseline_rows(manifest: RunManifest) -> list[tuple[str, str, float]]:
    """Analytic random baseline per manifest task: (task_name, metric, baseline)."""
    rows = []
    for entry in manifest.tasks:
        category, params, _ = _task_shape_params(entry)
        rows.append((entry.task_name, entry.metric_name, random_baseline(category, params)))
    return rows


def format_baseline_table(rows: list[tuple[str, str, float]]) -> str:
    table = [("Task", "Metric", "Random")]
    for name, metric, value in rows:
        table.append((name, metric, f"{100 * value:.2f}"))
    widths = [max(len(row[c]) for row in table) for c in range(3)]
    lines = ["  ".join(table[0][c].ljust(widths[c]) for c in range(3)).rstrip()]
    lines.append("  ".join("-" * widths[c] for c in range(3)))
    for row in table[1:]:
        lines.append("  ".join(row[c].ljust(widths[c]) for c in range(3)).rstrip())
    return "\n".join(lines)

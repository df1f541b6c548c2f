"""Task data types, line-oriented record files, and unique id generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from .hashing import fnv1a64


class TaskCategory(str, Enum):
    CLASSIFICATION = "Classification"
    RERANKING = "Reranking"
    RETRIEVAL = "Retrieval"
    PAIRWISE_CLASSIFICATION = "PairwiseClassification"
    BITEXT_MINING = "BitextMining"


class RecordInvariantError(ValueError):
    """A record violates one of its declared invariants."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise RecordInvariantError(message)


@dataclass(frozen=True)
class ClassificationExample:
    id: str
    input_text: str
    candidate_labels: tuple[str, ...]
    gold_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidate_labels", tuple(self.candidate_labels))
        _require(bool(self.id), "id must be non-empty")
        _require(bool(self.input_text), "input_text must be non-empty")
        _require(len(self.candidate_labels) >= 2, "need at least 2 candidate_labels")
        _require(
            len(set(self.candidate_labels)) == len(self.candidate_labels),
            "candidate_labels must be pairwise distinct",
        )
        _require(
            0 <= self.gold_index < len(self.candidate_labels),
            f"gold_index {self.gold_index} out of range",
        )


@dataclass(frozen=True)
class RerankingExample:
    id: str
    query: str
    positives: tuple[str, ...]
    negatives: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "positives", tuple(self.positives))
        object.__setattr__(self, "negatives", tuple(self.negatives))
        _require(bool(self.id), "id must be non-empty")
        _require(bool(self.query), "query must be non-empty")
        _require(len(self.positives) >= 1, "need at least 1 positive")
        _require(len(self.negatives) >= 1, "need at least 1 negative")
        _require(all(self.positives) and all(self.negatives), "candidate texts must be non-empty")
        overlap = set(self.positives) & set(self.negatives)
        _require(not overlap, f"positives and negatives overlap: {sorted(overlap)!r}")


@dataclass(frozen=True)
class RetrievalTask:
    queries: tuple[tuple[str, str], ...]
    corpus: tuple[tuple[str, str], ...]
    qrels: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "queries", tuple((str(a), str(b)) for a, b in self.queries))
        object.__setattr__(self, "corpus", tuple((str(a), str(b)) for a, b in self.corpus))
        object.__setattr__(
            self, "qrels", {str(k): frozenset(v) for k, v in self.qrels.items()}
        )
        query_ids = [qid for qid, _ in self.queries]
        doc_ids = [did for did, _ in self.corpus]
        _require(len(set(query_ids)) == len(query_ids), "duplicate query_id")
        _require(len(set(doc_ids)) == len(doc_ids), "duplicate doc_id")
        known_docs = set(doc_ids)
        known_queries = set(query_ids)
        for qid, rel in self.qrels.items():
            _require(qid in known_queries, f"qrels query_id {qid!r} not in queries")
            _require(len(rel) >= 1, f"qrels for {qid!r} must be non-empty")
            for did in rel:
                _require(did in known_docs, f"qrels doc_id {did!r} not in corpus")


@dataclass(frozen=True)
class PairExample:
    id: str
    text_a: str
    text_b: str
    is_match: bool

    def __post_init__(self) -> None:
        _require(bool(self.id), "id must be non-empty")
        _require(bool(self.text_a) and bool(self.text_b), "pair texts must be non-empty")


@dataclass(frozen=True)
class BitextExample:
    id: str
    source_text: str
    target_text: str

    def __post_init__(self) -> None:
        _require(bool(self.id), "id must be non-empty")
        _require(
            bool(self.source_text) and bool(self.target_text),
            "source_text and target_text must be non-empty",
        )


@dataclass(frozen=True)
class LabelSpec:
    label: str
    explanation: str

    def __post_init__(self) -> None:
        _require(bool(self.label), "label must be non-empty")


@dataclass(frozen=True)
class TripletRecord:
    uid: str
    input_text: str
    positive_text: str
    negative_texts: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "negative_texts", tuple(self.negative_texts))
        _require(bool(self.uid), "uid must be non-empty")
        _require(len(self.negative_texts) >= 1, "need at least 1 negative_text")
        _require(
            self.positive_text.endswith(self.uid),
            "positive_text must end with the triplet uid",
        )
        for neg in self.negative_texts:
            _require(neg.endswith(self.uid), "every negative_text must end with the triplet uid")
        _require(
            self.positive_text not in self.negative_texts,
            "positive_text must not appear among negative_texts",
        )
        _require(
            len(set(self.negative_texts)) == len(self.negative_texts),
            "negative_texts must be pairwise distinct",
        )


@dataclass(frozen=True)
class EvalReport:
    task_name: str
    category: TaskCategory
    metric_name: str
    value: float
    random_baseline: float
    n_examples: int
    extras: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _require(0.0 <= self.value <= 1.0, f"value {self.value} outside [0, 1]")
        _require(
            0.0 <= self.random_baseline <= 1.0,
            f"random_baseline {self.random_baseline} outside [0, 1]",
        )
        _require(self.n_examples >= 1, "n_examples must be >= 1")


def generate_uid(dataset_name: str, index: int) -> str:
    """Deterministic 16-char lowercase hex token for example `index` of a dataset."""
    if not dataset_name:
        raise ValueError("dataset_name must be non-empty")
    if index < 0:
        raise ValueError("index must be non-negative")
    return format(fnv1a64(f"{dataset_name}:{index}"), "016x")


# Serialization. One JSON object per line, UTF-8, LF, keys exactly as below.

_CLASSIFICATION_KEYS = ("id", "input_text", "candidate_labels", "gold_index")
_RERANKING_KEYS = ("id", "query", "positives", "negatives")
_PAIR_KEYS = ("id", "text_a", "text_b", "is_match")
_BITEXT_KEYS = ("id", "source_text", "target_text")
_TRIPLET_KEYS = ("uid", "input_text", "positive_text", "negative_texts")


def _check_keys(obj: dict[str, Any], keys: tuple[str, ...]) -> None:
    if not isinstance(obj, dict):
        raise RecordInvariantError("record must be a JSON object")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise RecordInvariantError(f"missing keys: {missing}")
    extra = [k for k in obj if k not in keys]
    if extra:
        raise RecordInvariantError(f"unexpected keys: {extra}")


def _str_list(value: Any, name: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise RecordInvariantError(f"{name} must be a list of strings")
    return value


def classification_to_obj(ex: ClassificationExample) -> dict[str, Any]:
    return {
        "id": ex.id,
        "input_text": ex.input_text,
        "candidate_labels": list(ex.candidate_labels),
        "gold_index": ex.gold_index,
    }


def classification_from_obj(obj: dict[str, Any]) -> ClassificationExample:
    _check_keys(obj, _CLASSIFICATION_KEYS)
    if not isinstance(obj["gold_index"], int) or isinstance(obj["gold_index"], bool):
        raise RecordInvariantError("gold_index must be an integer")
    return ClassificationExample(
        id=str(obj["id"]),
        input_text=str(obj["input_text"]),
        candidate_labels=tuple(_str_list(obj["candidate_labels"], "candidate_labels")),
        gold_index=obj["gold_index"],
    )


def reranking_to_obj(ex: RerankingExample) -> dict[str, Any]:
    return {
        "id": ex.id,
        "query": ex.query,
        "positives": list(ex.positives),
        "negatives": list(ex.negatives),
    }


def reranking_from_obj(obj: dict[str, Any]) -> RerankingExample:
    _check_keys(obj, _RERANKING_KEYS)
    return RerankingExample(
        id=str(obj["id"]),
        query=str(obj["query"]),
        positives=tuple(_str_list(obj["positives"], "positives")),
        negatives=tuple(_str_list(obj["negatives"], "negatives")),
    )


def pair_to_obj(ex: PairExample) -> dict[str, Any]:
    return {"id": ex.id, "text_a": ex.text_a, "text_b": ex.text_b, "is_match": ex.is_match}


def pair_from_obj(obj: dict[str, Any]) -> PairExample:
    _check_keys(obj, _PAIR_KEYS)
    if not isinstance(obj["is_match"], bool):
        raise RecordInvariantError("is_match must be a boolean")
    return PairExample(
        id=str(obj["id"]),
        text_a=str(obj["text_a"]),
        text_b=str(obj["text_b"]),
        is_match=obj["is_match"],
    )


def bitext_to_obj(ex: BitextExample) -> dict[str, Any]:
    return {"id": ex.id, "source_text": ex.source_text, "target_text": ex.target_text}


def bitext_from_obj(obj: dict[str, Any]) -> BitextExample:
    _check_keys(obj, _BITEXT_KEYS)
    return BitextExample(
        id=str(obj["id"]),
        source_text=str(obj["source_text"]),
        target_text=str(obj["target_text"]),
    )


def triplet_to_obj(t: TripletRecord) -> dict[str, Any]:
    return {
        "uid": t.uid,
        "input_text": t.input_text,
        "positive_text": t.positive_text,
        "negative_texts": list(t.negative_texts),
    }


def triplet_from_obj(obj: dict[str, Any]) -> TripletRecord:
    _check_keys(obj, _TRIPLET_KEYS)
    return TripletRecord(
        uid=str(obj["uid"]),
        input_text=str(obj["input_text"]),
        positive_text=str(obj["positive_text"]),
        negative_texts=tuple(_str_list(obj["negative_texts"], "negative_texts")),
    )


def report_to_obj(r: EvalReport) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "task_name": r.task_name,
        "category": r.category.value,
        "metric_name": r.metric_name,
        "value": r.value,
        "random_baseline": r.random_baseline,
        "n_examples": r.n_examples,
    }
    if r.extras:
        obj["extras"] = {k: r.extras[k] for k in sorted(r.extras)}
    return obj


def report_from_obj(obj: dict[str, Any]) -> EvalReport:
    return EvalReport(
        task_name=str(obj["task_name"]),
        category=TaskCategory(obj["category"]),
        metric_name=str(obj["metric_name"]),
        value=float(obj["value"]),
        random_baseline=float(obj["random_baseline"]),
        n_examples=int(obj["n_examples"]),
        extras=dict(obj.get("extras", {})),
    )


_PARSERS: dict[TaskCategory, Callable[[dict[str, Any]], Any]] = {
    TaskCategory.CLASSIFICATION: classification_from_obj,
    TaskCategory.RERANKING: reranking_from_obj,
    TaskCategory.PAIRWISE_CLASSIFICATION: pair_from_obj,
    TaskCategory.BITEXT_MINING: bitext_from_obj,
}

_SERIALIZERS: dict[type, Callable[[Any], dict[str, Any]]] = {
    ClassificationExample: classification_to_obj,
    RerankingExample: reranking_to_obj,
    PairExample: pair_to_obj,
    BitextExample: bitext_to_obj,
    TripletRecord: triplet_to_obj,
    EvalReport: report_to_obj,
}


def dumps_record(record: Any) -> str:
    """Serialize one record to its canonical single-line JSON form."""
    return json.dumps(_SERIALIZERS[type(record)](record), ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[Any]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dumps_record(record) + "\n")
            count += 1
    return count


def read_jsonl_objects(path: str | Path) -> list[dict[str, Any]]:
    """Parse a line-oriented JSON file into raw objects, skipping blank lines."""
    objects = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                objects.append(json.loads(line))
    return objects


@dataclass(frozen=True)
class ValidationIssue:
    line: int
    message: str


class TaskFileError(ValueError):
    """A task file failed validation; carries every issue found."""

    def __init__(self, path: str | Path, issues: list[ValidationIssue]):
        self.path = str(path)
        self.issues = list(issues)
        first = "; ".join(f"line {i.line}: {i.message}" for i in issues[:3])
        more = "" if len(issues) <= 3 else f" (+{len(issues) - 3} more)"
        super().__init__(f"{path}: {first}{more}")


@dataclass(frozen=True)
class ValidationReport:
    path: str
    category: TaskCategory
    count: int
    issues: tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues


def _validate_lines(path: str | Path, category: TaskCategory) -> tuple[int, list[ValidationIssue]]:
    parser = _PARSERS[category]
    issues: list[ValidationIssue] = []
    seen_ids: set[str] = set()
    count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                record = parser(obj)
            except (json.JSONDecodeError, RecordInvariantError, ValueError) as exc:
                issues.append(ValidationIssue(lineno, str(exc)))
                continue
            if record.id in seen_ids:
                issues.append(ValidationIssue(lineno, f"duplicate id {record.id!r}"))
                continue
            seen_ids.add(record.id)
            count += 1
    return count, issues


RETRIEVAL_QUERIES_FILE = "queries.jsonl"
RETRIEVAL_CORPUS_FILE = "corpus.jsonl"
RETRIEVAL_QRELS_FILE = "qrels.jsonl"


def write_retrieval_task(directory: str | Path, task: RetrievalTask) -> None:
    """Store a retrieval task as queries/corpus/qrels line files in `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / RETRIEVAL_QUERIES_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for qid, text in task.queries:
            fh.write(json.dumps({"query_id": qid, "text": text}, ensure_ascii=False) + "\n")
    with open(directory / RETRIEVAL_CORPUS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for did, text in task.corpus:
            fh.write(json.dumps({"doc_id": did, "text": text}, ensure_ascii=False) + "\n")
    with open(directory / RETRIEVAL_QRELS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for qid, _ in task.queries:
            if qid in task.qrels:
                doc_ids = sorted(task.qrels[qid])
                fh.write(json.dumps({"query_id": qid, "doc_ids": doc_ids}, ensure_ascii=False) + "\n")


def load_retrieval_task(directory: str | Path) -> RetrievalTask:
    directory = Path(directory)
    queries = [
        (str(o["query_id"]), str(o["text"]))
        for o in read_jsonl_objects(directory / RETRIEVAL_QUERIES_FILE)
    ]
    corpus = [
        (str(o["doc_id"]), str(o["text"]))
        for o in read_jsonl_objects(directory / RETRIEVAL_CORPUS_FILE)
    ]
    qrels = {
        str(o["query_id"]): frozenset(_str_list(o["doc_ids"], "doc_ids"))
        for o in read_jsonl_objects(directory / RETRIEVAL_QRELS_FILE)
    }
    return RetrievalTask(queries=tuple(queries), corpus=tuple(corpus), qrels=qrels)


def _validate_retrieval(path: str | Path) -> tuple[int, list[ValidationIssue]]:
    directory = Path(path)
    issues: list[ValidationIssue] = []
    for name in (RETRIEVAL_QUERIES_FILE, RETRIEVAL_CORPUS_FILE, RETRIEVAL_QRELS_FILE):
        if not (directory / name).is_file():
            issues.append(ValidationIssue(0, f"missing retrieval file {name}"))
    if issues:
        return 0, issues
    try:
        task = load_retrieval_task(directory)
    except (RecordInvariantError, ValueError, KeyError) as exc:
        return 0, [ValidationIssue(0, str(exc))]
    return len(task.queries), issues


def validate_task_file(path: str | Path, category: TaskCategory) -> ValidationReport:
    """Validate every record in a task file; collect all issues, no partial acceptance.

    For Retrieval, `path` is the task directory holding the three line files.
    """
    if category is TaskCategory.RETRIEVAL:
        count, issues = _validate_retrieval(path)
    else:
        count, issues = _validate_lines(path, category)
    if issues:
        count = 0
    return ValidationReport(
        path=str(path), category=category, count=count, issues=tuple(issues)
    )


def read_task_file(path: str | Path, category: TaskCategory) -> list[Any]:
    """Parse a validated task file into records; raise TaskFileError on any issue."""
    if category is TaskCategory.RETRIEVAL:
        report = validate_task_file(path, category)
        if not report.ok:
            raise TaskFileError(path, list(report.issues))
        return [load_retrieval_task(path)]
    parser = _PARSERS[category]
    records: list[Any] = []
    issues: list[ValidationIssue] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = parser(json.loads(line))
            except (json.JSONDecodeError, RecordInvariantError, ValueError) as exc:
                issues.append(ValidationIssue(lineno, str(exc)))
                continue
            if record.id in seen_ids:
                issues.append(ValidationIssue(lineno, f"duplicate id {record.id!r}"))
                continue
            seen_ids.add(record.id)
            records.append(record)
    if issues:
        raise TaskFileError(path, issues)
    return records


def read_triplets(path: str | Path) -> list[TripletRecord]:
    records: list[TripletRecord] = []
    issues: list[ValidationIssue] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(triplet_from_obj(json.loads(line)))
            except (json.JSONDecodeError, RecordInvariantError, ValueError) as exc:
                issues.append(ValidationIssue(lineno, str(exc)))
    if issues:
        raise TaskFileError(path, issues)
    return records

"""Converts raw source records into canonical task shapes and training triplets."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .records import (
    BitextExample,
    ClassificationExample,
    LabelSpec,
    PairExample,
    RecordInvariantError,
    RerankingExample,
    RetrievalTask,
    TaskCategory,
    TripletRecord,
)

RawRecord = dict[str, Any]


@dataclass(frozen=True)
class RecordError:
    index: int
    message: str


class MappingConfigError(ValueError):
    """The mapping config is inconsistent with its declared category."""


@dataclass(frozen=True)
class MappingConfig:
    source_name: str
    category: TaskCategory
    bindings: dict[str, Any] = field(default_factory=dict)
    label_specs: tuple[LabelSpec, ...] = ()
    input_template: str | None = None
    instruction_text: str | None = None
    negatives_per_doc: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_specs", tuple(self.label_specs))
        if not self.source_name:
            raise MappingConfigError("source_name must be non-empty")
        labels = [s.label for s in self.label_specs]
        if len(set(labels)) != len(labels):
            raise MappingConfigError("label_specs labels must be distinct")
        self._check_bindings()

    def _check_bindings(self) -> None:
        cat = self.category
        if cat is TaskCategory.CLASSIFICATION:
            if self.input_template is None and "input" not in self.bindings:
                raise MappingConfigError("classification needs input_template or an input binding")
            if "label" not in self.bindings:
                raise MappingConfigError("classification needs a label binding")
            if len(self.label_specs) < 2:
                raise MappingConfigError("classification needs at least 2 label_specs")
        elif cat is TaskCategory.RERANKING:
            if self.instruction_text is None and "instruction" not in self.bindings:
                raise MappingConfigError("reranking needs instruction_text or an instruction binding")
            missing = [k for k in ("context", "responses", "preference") if k not in self.bindings]
            if missing:
                raise MappingConfigError(f"reranking bindings missing: {missing}")
            responses = self.bindings["responses"]
            if not isinstance(responses, list) or len(responses) < 2:
                raise MappingConfigError("responses binding must list at least 2 fields")
        elif cat is TaskCategory.RETRIEVAL:
            missing = [k for k in ("input", "answers") if k not in self.bindings]
            if missing:
                raise MappingConfigError(f"retrieval bindings missing: {missing}")
        elif cat in (TaskCategory.PAIRWISE_CLASSIFICATION, TaskCategory.BITEXT_MINING):
            missing = [k for k in ("source", "target") if k not in self.bindings]
            if missing:
                raise MappingConfigError(f"{cat.value} bindings missing: {missing}")
            if self.negatives_per_doc < 1:
                raise MappingConfigError("negatives_per_doc must be >= 1")


def load_mapping_config(path: str | Path) -> MappingConfig:
    from .labels import BUILTIN_LABEL_SPECS

    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        specs = []
        for s in obj.get("label_specs", []):
            explanation = s.get("explanation", "")
            if not explanation and s["label"] in BUILTIN_LABEL_SPECS:
                explanation = BUILTIN_LABEL_SPECS[s["label"]].explanation
            specs.append(LabelSpec(label=s["label"], explanation=explanation))
        specs = tuple(specs)
        return MappingConfig(
            source_name=obj["source_name"],
            category=TaskCategory(obj["category"]),
            bindings=dict(obj.get("bindings", {})),
            label_specs=specs,
            input_template=obj.get("input_template"),
            instruction_text=obj.get("instruction_text"),
            negatives_per_doc=int(obj.get("negatives_per_doc", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MappingConfigError):
            raise
        raise MappingConfigError(f"{path}: {exc}") from exc


def read_raw_records(path: str | Path) -> list[RawRecord]:
    """Parse a raw-record line file; values must be strings or lists of strings."""
    from .records import TaskFileError, ValidationIssue

    records: list[RawRecord] = []
    issues: list[ValidationIssue] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                issues.append(ValidationIssue(lineno, str(exc)))
                continue
            if not isinstance(obj, dict):
                issues.append(ValidationIssue(lineno, "raw record must be a JSON object"))
                continue
            bad = [
                k
                for k, v in obj.items()
                if not (
                    isinstance(v, str)
                    or (isinstance(v, list) and all(isinstance(x, str) for x in v))
                )
            ]
            if bad:
                issues.append(
                    ValidationIssue(lineno, f"fields must be strings or string lists: {bad}")
                )
                continue
            records.append(obj)
    if issues:
        raise TaskFileError(path, issues)
    return records


class _SkipRecord(ValueError):
    pass


def _get_str(record: RawRecord, field_name: str) -> str:
    if field_name not in record:
        raise _SkipRecord(f"missing field {field_name!r}")
    value = record[field_name]
    if not isinstance(value, str):
        raise _SkipRecord(f"field {field_name!r} must be a string")
    return value


_TEMPLATE_TOKEN = re.compile(r"\{([A-Za-z0-9_]+)\}")


def render_template(template: str, record: RawRecord) -> str:
    """Substitute {field} tokens from the record; other text passes through."""

    def sub(match: re.Match[str]) -> str:
        return _get_str(record, match.group(1))

    return _TEMPLATE_TOKEN.sub(sub, template)


def _input_text(record: RawRecord, cfg: MappingConfig) -> str:
    if cfg.input_template is not None:
        return render_template(cfg.input_template, record)
    return _get_str(record, cfg.bindings["input"])


def reformulate_classification(
    records: list[RawRecord], cfg: MappingConfig
) -> tuple[list[ClassificationExample], list[RecordError]]:
    """Map raw records into ClassificationExamples using the config's label set."""
    assert cfg.category is TaskCategory.CLASSIFICATION
    labels = [s.label for s in cfg.label_specs]
    out: list[ClassificationExample] = []
    errors: list[RecordError] = []
    for idx, record in enumerate(records):
        try:
            gold = _get_str(record, cfg.bindings["label"])
            if gold not in labels:
                raise _SkipRecord(f"gold label {gold!r} not in label_specs")
            out.append(
                ClassificationExample(
                    id=f"{cfg.source_name}-{idx}",
                    input_text=_input_text(record, cfg),
                    candidate_labels=tuple(labels),
                    gold_index=labels.index(gold),
                )
            )
        except (_SkipRecord, RecordInvariantError) as exc:
            errors.append(RecordError(idx, str(exc)))
    return out, errors


def reformulate_reranking(
    records: list[RawRecord], cfg: MappingConfig
) -> tuple[list[RerankingExample], list[RecordError]]:
    """Build query plus preferred/other response candidates from preference records."""
    assert cfg.category is TaskCategory.RERANKING
    response_fields: list[str] = list(cfg.bindings["responses"])
    out: list[RerankingExample] = []
    errors: list[RecordError] = []
    for idx, record in enumerate(records):
        try:
            if "instruction" in cfg.bindings:
                instruction = _get_str(record, cfg.bindings["instruction"])
            else:
                instruction = cfg.instruction_text or ""
            context = _get_str(record, cfg.bindings["context"])
            preference = record.get(cfg.bindings["preference"])
            preferred = preference if isinstance(preference, list) else [preference]
            if not all(p in response_fields for p in preferred):
                raise _SkipRecord(f"preference {preference!r} names no configured response")
            positives = [_get_str(record, p) for p in preferred]
            negatives = [_get_str(record, f) for f in response_fields if f not in preferred]
            out.append(
                RerankingExample(
                    id=f"{cfg.source_name}-{idx}",
                    query=instruction + "\n" + context,
                    positives=tuple(positives),
                    negatives=tuple(negatives),
                )
            )
        except (_SkipRecord, RecordInvariantError) as exc:
            errors.append(RecordError(idx, str(exc)))
    return out, errors


def reformulate_reasoning_retrieval(
    records: list[RawRecord], cfg: MappingConfig
) -> tuple[RetrievalTask, list[RecordError]]:
    """Pool every gold answer into a deduplicated corpus and map questions onto it."""
    assert cfg.category is TaskCategory.RETRIEVAL
    errors: list[RecordError] = []
    queries: list[tuple[str, str]] = []
    corpus: list[tuple[str, str]] = []
    doc_id_by_answer: dict[str, str] = {}
    qrels: dict[str, frozenset[str]] = {}
    for idx, record in enumerate(records):
        try:
            question = _get_str(record, cfg.bindings["input"])
            answer_value = record.get(cfg.bindings["answers"])
            if isinstance(answer_value, list):
                if len(answer_value) != 1:
                    raise _SkipRecord("expected exactly one gold answer")
                answer_value = answer_value[0]
            if not isinstance(answer_value, str) or not answer_value:
                raise _SkipRecord("gold answer must be a non-empty string")
            if not question:
                raise _SkipRecord("question must be non-empty")
            # First occurrence of an answer string owns the doc id.
            if answer_value not in doc_id_by_answer:
                doc_id = f"{cfg.source_name}-d{len(doc_id_by_answer)}"
                doc_id_by_answer[answer_value] = doc_id
                corpus.append((doc_id, answer_value))
            query_id = f"{cfg.source_name}-q{idx}"
            queries.append((query_id, question))
            qrels[query_id] = frozenset({doc_id_by_answer[answer_value]})
        except _SkipRecord as exc:
            errors.append(RecordError(idx, str(exc)))
    return RetrievalTask(queries=tuple(queries), corpus=tuple(corpus), qrels=qrels), errors


def reformulate_paraphrase_pairwise(
    records: list[tuple[str, str]],
    m: int,
    seed: int,
    source_name: str = "pairwise",
) -> list[PairExample]:
    """Pair each document with its own paraphrase plus m sampled foreign paraphrases."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(records) < m + 1:
        raise ValueError(f"need at least {m + 1} documents for m={m}, got {len(records)}")
    rng = random.Random(seed)
    out: list[PairExample] = []
    for i, (doc, paraphrase) in enumerate(records):
        out.append(
            PairExample(id=f"{source_name}-{i}-match", text_a=doc, text_b=paraphrase, is_match=True)
        )
        others = [j for j in range(len(records)) if j != i]
        for t, j in enumerate(rng.sample(others, m)):
            out.append(
                PairExample(
                    id=f"{source_name}-{i}-mis{t}",
                    text_a=doc,
                    text_b=records[j][1],
                    is_match=False,
                )
            )
    return out


def extract_doc_pairs(
    records: list[RawRecord], cfg: MappingConfig
) -> tuple[list[tuple[str, str]], list[RecordError]]:
    """Pull (document, paraphrase) tuples out of raw records for pairwise building."""
    pairs: list[tuple[str, str]] = []
    errors: list[RecordError] = []
    for idx, record in enumerate(records):
        try:
            doc = _get_str(record, cfg.bindings["source"])
            para = _get_str(record, cfg.bindings["target"])
            if not doc or not para:
                raise _SkipRecord("document and paraphrase must be non-empty")
            pairs.append((doc, para))
        except _SkipRecord as exc:
            errors.append(RecordError(idx, str(exc)))
    return pairs, errors


def reformulate_bitext(
    records: list[RawRecord], cfg: MappingConfig
) -> tuple[list[BitextExample], list[RecordError]]:
    assert cfg.category is TaskCategory.BITEXT_MINING
    out: list[BitextExample] = []
    errors: list[RecordError] = []
    for idx, record in enumerate(records):
        try:
            source = _get_str(record, cfg.bindings["source"])
            target = _get_str(record, cfg.bindings["target"])
            out.append(
                BitextExample(
                    id=f"{cfg.source_name}-{idx}", source_text=source, target_text=target
                )
            )
        except (_SkipRecord, RecordInvariantError) as exc:
            errors.append(RecordError(idx, str(exc)))
    return out, errors


def _render_target(label: str, spec: LabelSpec, uid: str, with_explanation: bool) -> str:
    if with_explanation:
        if not spec.explanation:
            raise ValueError(f"label {label!r} has no explanation to render")
        return f"{label}. {spec.explanation} {uid}"
    return f"{label} {uid}"


def _augment(
    ex: ClassificationExample,
    specs: list[LabelSpec] | tuple[LabelSpec, ...],
    uid: str,
    with_explanation: bool,
) -> TripletRecord:
    if not uid:
        raise ValueError("uid must be non-empty")
    spec_by_label = {s.label: s for s in specs}
    missing = [l for l in ex.candidate_labels if l not in spec_by_label]
    if missing:
        raise ValueError(f"label specs missing candidate labels: {missing}")
    extra = [l for l in spec_by_label if l not in ex.candidate_labels]
    if extra:
        raise ValueError(f"label specs name labels outside the candidate set: {extra}")
    gold = ex.candidate_labels[ex.gold_index]
    positive = _render_target(gold, spec_by_label[gold], uid, with_explanation)
    negatives = tuple(
        _render_target(label, spec_by_label[label], uid, with_explanation)
        for label in ex.candidate_labels
        if label != gold
    )
    return TripletRecord(
        uid=uid, input_text=ex.input_text, positive_text=positive, negative_texts=negatives
    )


def augment_labels(
    ex: ClassificationExample, specs: list[LabelSpec] | tuple[LabelSpec, ...], uid: str
) -> TripletRecord:
    """Render the gold label as the positive target and every other label, with the
    same uid suffix, as negatives. Targets are "label. explanation uid"."""
    return _augment(ex, specs, uid, with_explanation=True)


def augment_labels_plain(
    ex: ClassificationExample, specs: list[LabelSpec] | tuple[LabelSpec, ...], uid: str
) -> TripletRecord:
    """Variant of augment_labels with the explanation omitted: "label uid"."""
    return _augment(ex, specs, uid, with_explanation=False)

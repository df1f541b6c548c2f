"""Command-line entry points for building, validating, evaluating, and training.

Exit codes: 0 success, 1 usage or config error, 2 partial task failure,
3 fatal runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .adapter import TrainConfig, load_train_config, save_checkpoint, train
from .harness import (
    ManifestError,
    baseline_rows,
    evaluate_manifest,
    format_baseline_table,
    format_csv,
    format_table,
    load_manifest,
    write_results,
)
from .providers import ProviderError, build_provider, load_provider_config
from .records import (
    LabelSpec,
    TaskCategory,
    TaskFileError,
    dumps_record,
    generate_uid,
    read_task_file,
    read_triplets,
    validate_task_file,
    write_jsonl,
    write_retrieval_task,
)
from .reformulate import (
    MappingConfigError,
    augment_labels,
    augment_labels_plain,
    extract_doc_pairs,
    load_mapping_config,
    read_raw_records,
    reformulate_bitext,
    reformulate_classification,
    reformulate_paraphrase_pairwise,
    reformulate_reasoning_retrieval,
    reformulate_reranking,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_FATAL = 3

_CATEGORY_ALIASES = {
    "classification": TaskCategory.CLASSIFICATION,
    "reranking": TaskCategory.RERANKING,
    "retrieval": TaskCategory.RETRIEVAL,
    "pairwiseclassification": TaskCategory.PAIRWISE_CLASSIFICATION,
    "pairwise": TaskCategory.PAIRWISE_CLASSIFICATION,
    "bitextmining": TaskCategory.BITEXT_MINING,
    "bitext": TaskCategory.BITEXT_MINING,
}


def parse_category(value: str) -> TaskCategory:
    key = value.strip().lower()
    if key not in _CATEGORY_ALIASES:
        raise ValueError(f"unknown category {value!r}")
    return _CATEGORY_ALIASES[key]


def _add_common_flags(parser: argparse.ArgumentParser, top_level: bool) -> None:
    # Global flags work both before and after the verb; the subparser copies use
    # SUPPRESS so an absent flag never clobbers a value parsed at the top level.
    defaults = {"seed": None, "jobs": 1, "output_dir": None, "provider_config": None}
    helps = {
        "seed": "seed for sampling and training",
        "jobs": "parallel task evaluations",
        "output_dir": "override the manifest output dir",
        "provider_config": "provider config JSON path",
    }
    for name in defaults:
        flag = "--" + name.replace("_", "-")
        default = defaults[name] if top_level else argparse.SUPPRESS
        kind = int if name in ("seed", "jobs") else str
        parser.add_argument(flag, type=kind, default=default, help=helps[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embench",
        description="Reformulate datasets into embedding tasks, evaluate providers, "
        "and train linear adapters.",
    )
    _add_common_flags(parser, top_level=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reformulate", help="convert raw records into a canonical task file")
    p.add_argument("--mapping", required=True, help="mapping config JSON")
    p.add_argument("--input", required=True, help="raw-record line file")
    p.add_argument("--output", required=True, help="task file (directory for retrieval)")
    _add_common_flags(p, top_level=False)
    p.set_defaults(func=cmd_reformulate)

    p = sub.add_parser("augment", help="turn a classification task into training triplets")
    p.add_argument("--input", required=True, help="classification task file")
    p.add_argument("--labels", required=True, help="label specs JSON (or a mapping config)")
    p.add_argument("--output", required=True)
    p.add_argument("--task-name", default=None, help="uid namespace, default: input stem")
    p.add_argument(
        "--with-explanations",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render targets as 'label. explanation uid' (default on)",
    )
    _add_common_flags(p, top_level=False)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="run every task in a manifest against a provider")
    p.add_argument("--manifest", required=True)
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    _add_common_flags(p, top_level=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train-adapter", help="train a linear adapter on triplet files")
    p.add_argument("--triplets", required=True, nargs="+", help="triplet line files")
    p.add_argument("--train-config", default=None, help="train config JSON")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--history-out", default=None, help="default: <checkpoint>.history.jsonl")
    p.add_argument("--init", choices=["identity", "random"], default="identity")
    p.add_argument("--d-out", type=int, default=None)
    _add_common_flags(p, top_level=False)
    p.set_defaults(func=cmd_train_adapter)

    p = sub.add_parser("baseline", help="print analytic random baselines for a manifest")
    p.add_argument("--manifest", required=True)
    _add_common_flags(p, top_level=False)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("validate", help="validate a task file against its category schema")
    p.add_argument("--path", required=True)
    p.add_argument("--category", required=True)
    _add_common_flags(p, top_level=False)
    p.set_defaults(func=cmd_validate)
    return parser


def cmd_reformulate(args: argparse.Namespace) -> int:
    cfg = load_mapping_config(args.mapping)
    records = read_raw_records(args.input)
    seed = args.seed if args.seed is not None else 0
    out_path = Path(args.output)
    if cfg.category is TaskCategory.CLASSIFICATION:
        examples, errors = reformulate_classification(records, cfg)
        count = write_jsonl(out_path, examples)
    elif cfg.category is TaskCategory.RERANKING:
        examples, errors = reformulate_reranking(records, cfg)
        count = write_jsonl(out_path, examples)
    elif cfg.category is TaskCategory.RETRIEVAL:
        task, errors = reformulate_reasoning_retrieval(records, cfg)
        write_retrieval_task(out_path, task)
        count = len(task.queries)
    elif cfg.category is TaskCategory.PAIRWISE_CLASSIFICATION:
        pairs, errors = extract_doc_pairs(records, cfg)
        examples = reformulate_paraphrase_pairwise(
            pairs, m=cfg.negatives_per_doc, seed=seed, source_name=cfg.source_name
        )
        count = write_jsonl(out_path, examples)
    else:
        examples, errors = reformulate_bitext(records, cfg)
        count = write_jsonl(out_path, examples)
    print(f"wrote {count} records to {out_path}")
    if errors:
        print(f"warning: skipped {len(errors)} records", file=sys.stderr)
        for err in errors:
            print(f"  record {err.index}: {err.message}", file=sys.stderr)
    return EXIT_OK


def _load_label_specs(path: str) -> dict[str, LabelSpec]:
    from .labels import BUILTIN_LABEL_SPECS

    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if isinstance(obj, dict):
        obj = obj.get("label_specs", [])
    specs = []
    for s in obj:
        explanation = s.get("explanation", "")
        if not explanation and s["label"] in BUILTIN_LABEL_SPECS:
            explanation = BUILTIN_LABEL_SPECS[s["label"]].explanation
        specs.append(LabelSpec(label=s["label"], explanation=explanation))
    by_label = {s.label: s for s in specs}
    if len(by_label) != len(specs):
        raise ValueError("duplicate labels in label specs")
    return by_label


def cmd_augment(args: argparse.Namespace) -> int:
    examples = read_task_file(args.input, TaskCategory.CLASSIFICATION)
    by_label = _load_label_specs(args.labels)
    task_name = args.task_name or Path(args.input).stem
    triplets = []
    for index, ex in enumerate(examples):
        missing = [l for l in ex.candidate_labels if l not in by_label]
        if missing:
            raise ValueError(f"label specs missing candidate labels: {missing}")
        specs = [by_label[l] for l in ex.candidate_labels]
        uid = generate_uid(task_name, index)
        if args.with_explanations:
            triplets.append(augment_labels(ex, specs, uid))
        else:
            triplets.append(augment_labels_plain(ex, specs, uid))
    count = write_jsonl(args.output, triplets)
    print(f"wrote {count} triplets to {args.output}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if args.provider_config:
        manifest = replace(manifest, provider_config=load_provider_config(args.provider_config))
    if args.output_dir:
        manifest = replace(manifest, output_dir=Path(args.output_dir))
    reports, failures = evaluate_manifest(manifest, jobs=max(1, args.jobs))
    results_path = write_results(reports, manifest.output_dir)
    if args.format == "table":
        print(format_table(reports, failures))
    elif args.format == "csv":
        print(format_csv(reports))
    else:
        for report in reports:
            print(dumps_record(report))
    print(f"results written to {results_path}", file=sys.stderr)
    for failure in failures:
        print(f"task {failure.task_name} failed: {failure.message}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_train_adapter(args: argparse.Namespace) -> int:
    if not args.provider_config:
        raise ValueError("train-adapter requires --provider-config")
    provider = build_provider(load_provider_config(args.provider_config))
    cfg = load_train_config(args.train_config) if args.train_config else TrainConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    triplets = []
    tags = []
    for path in args.triplets:
        loaded = read_triplets(path)
        triplets.extend(loaded)
        tags.extend([Path(path).stem] * len(loaded))
    params, history = train(
        triplets, provider, cfg, init=args.init, d_out=args.d_out, tags=tags
    )
    save_checkpoint(args.checkpoint_out, params)
    history_path = args.history_out or f"{args.checkpoint_out}.history.jsonl"
    history.write_jsonl(history_path)
    if history.entries:
        print(
            f"trained {len(history.entries)} steps: "
            f"first loss {history.entries[0].loss:.6f}, last loss {history.entries[-1].loss:.6f}"
        )
    else:
        print("trained 0 steps: checkpoint equals initialization")
    print(f"checkpoint written to {args.checkpoint_out}")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    print(format_baseline_table(baseline_rows(manifest)))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    category = parse_category(args.category)
    report = validate_task_file(args.path, category)
    if report.ok:
        print(f"{report.path}: {report.count} valid records")
        return EXIT_OK
    for issue in report.issues:
        print(f"{report.path}:{issue.line}: {issue.message}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map onto this tool's code for config errors
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (
        MappingConfigError,
        ManifestError,
        TaskFileError,
        FileNotFoundError,
        NotADirectoryError,
        IsADirectoryError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except Exception as exc:  # anything unexpected is a fatal runtime error
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


def entrypoint() -> None:
    sys.exit(main())

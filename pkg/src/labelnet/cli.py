"""Command-line front door.

Subcommands mirror the two phases (discovery, exploitation) plus the
composed cross-validation pipeline, so each stage is independently
scriptable. File arguments accept ``-`` for stdin/stdout.

Exit codes: 0 success, 1 usage error, 2 data-contract error, 3 internal
invariant failure.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

from . import __version__
from .dataset import MultiLabelDataset, load_csv, load_mulan, save_csv
from .discovery import (
    discover_relationships,
    escalate_minsup,
    relationship_report,
    relationship_set_from_report,
)
from .errors import DataContractError, LabelNetError
from .evaluation import EvaluationReport, compare
from .inference import MarginalCorrector
from .network import build_network, generate_leak_labels, network_from_json_dict
from .pipeline import (
    PipelineConfig,
    PredictionTable,
    read_predictions,
    run_cv,
    write_predictions,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataContractError(str(exc)) from None


def _read_json(path: str):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataContractError(f"{path}: invalid JSON ({exc})") from None


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataContractError(str(exc)) from None


def _load_dataset(args) -> MultiLabelDataset:
    if getattr(args, "xml", None):
        return load_mulan(
            io.StringIO(_read_text(args.data)), io.StringIO(_read_text(args.xml))
        )
    if not getattr(args, "labels", None):
        raise _UsageError("--labels is required for CSV datasets")
    names = [n for n in args.labels.split(",") if n]
    return load_csv(io.StringIO(_read_text(args.data)), names)


def _add_dataset_flags(parser):
    parser.add_argument(
        "--data",
        required=True,
        help="dataset file (CSV or attribute-relation); - for stdin",
    )
    parser.add_argument("--labels", help="comma-separated label column names (CSV mode)")
    parser.add_argument("--xml", help="label-list XML companion (attribute-relation mode)")


def cmd_discover(args) -> None:
    dataset = _load_dataset(args)
    minsup_excl = args.minsup_excl
    if args.escalate:
        minsup_excl, _ = escalate_minsup(
            dataset.labels,
            start=args.minsup_excl,
            cap_relationships=args.escalate_cap,
            cap_time=args.escalate_time,
        )
    relationships = discover_relationships(
        dataset.labels, args.minsup_entail, minsup_excl
    )
    _write_text(
        args.output, json.dumps(relationship_report(relationships), indent=2) + "\n"
    )


def cmd_build_net(args) -> None:
    relationships = relationship_set_from_report(_read_json(args.relationships))
    if args.data:
        label_names = _load_dataset(args).labels.label_names
    elif args.labels:
        label_names = tuple(n for n in args.labels.split(",") if n)
    else:
        raise _UsageError("build-net needs --labels or --data")
    network = build_network(relationships, label_names)
    _write_text(args.output, json.dumps(network.to_json_dict(), indent=2) + "\n")


def cmd_leaks(args) -> None:
    dataset = _load_dataset(args)
    relationships = relationship_set_from_report(_read_json(args.relationships))
    augmented = generate_leak_labels(dataset.labels, relationships)
    buf = io.StringIO()
    save_csv(MultiLabelDataset(dataset.features, augmented, dataset.name), buf)
    _write_text(args.output, buf.getvalue())


def cmd_correct(args) -> None:
    network = network_from_json_dict(_read_json(args.network))
    table = read_predictions(io.StringIO(_read_text(args.predictions)))
    corrector = MarginalCorrector(network, clamp=args.clamp_epsilon)
    corrected = PredictionTable(
        table.instance_ids,
        table.node_names,
        corrector.correct_batch(table.node_names, table.values),
    )
    buf = io.StringIO()
    write_predictions(corrected, buf)
    _write_text(args.output, buf.getvalue())


def cmd_evaluate(args) -> None:
    dataset = _load_dataset(args)
    before = read_predictions(io.StringIO(_read_text(args.before)))
    after = read_predictions(io.StringIO(_read_text(args.after)))
    for instance_id in before.instance_ids:
        if not 0 <= instance_id < dataset.n_instances:
            raise DataContractError(f"instance id {instance_id} outside the dataset")
    truth = dataset.labels.subset(list(before.instance_ids))
    fold_report = compare(
        before.select(dataset.labels.label_names),
        after.select(dataset.labels.label_names),
        truth,
    )
    report = EvaluationReport((fold_report,), (0,), 0, (0,))
    _emit_report(args, report)


def cmd_pipeline(args) -> None:
    dataset = _load_dataset(args)
    config = PipelineConfig(
        learner=args.learner,
        minsup_entail=args.minsup_entail,
        minsup_excl=args.minsup_excl,
        exploit=args.exploit,
        folds=args.folds,
        seed=args.seed,
        escalate=args.escalate,
        escalate_cap=args.escalate_cap,
        escalate_time=args.escalate_time,
        clamp_epsilon=args.clamp_epsilon,
        threads=args.threads,
    )
    results, report = run_cv(dataset, config)
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )
        (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
        for result in results:
            fold_dir = out / f"fold_{result.fold_index}"
            fold_dir.mkdir(exist_ok=True)
            (fold_dir / "relationships.json").write_text(
                json.dumps(relationship_report(result.relationships), indent=2) + "\n",
                encoding="utf-8",
            )
            (fold_dir / "network.json").write_text(
                json.dumps(result.network.to_json_dict(), indent=2) + "\n",
                encoding="utf-8",
            )
            for name, table in (
                ("predictions_raw.csv", result.raw_predictions),
                ("predictions_corrected.csv", result.corrected_predictions),
            ):
                with open(fold_dir / name, "w", encoding="utf-8", newline="") as fh:
                    write_predictions(table, fh)
    _emit_report(args, report)


def _emit_report(args, report: EvaluationReport) -> None:
    if args.format == "json":
        text = json.dumps(report.to_json_dict(), indent=2) + "\n"
    else:
        text = report.to_text()
    _write_text(getattr(args, "output", None), text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelnet", description=__doc__)
    parser.add_argument(
        "--version", action="version", version=f"labelnet {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="mine label relationships from a dataset")
    _add_dataset_flags(p)
    p.add_argument("--minsup-entail", type=int, default=2, dest="minsup_entail")
    p.add_argument("--minsup-excl", type=int, default=2, dest="minsup_excl")
    p.add_argument(
        "--escalate",
        action="store_true",
        help="double the exclusion support until mining is tractable",
    )
    p.add_argument("--escalate-cap", type=int, default=1000, dest="escalate_cap")
    p.add_argument("--escalate-time", type=float, default=60.0, dest="escalate_time")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser(
        "build-net", help="build the network JSON from a relationships report"
    )
    p.add_argument("--relationships", required=True)
    p.add_argument("--labels", help="comma-separated full label list")
    p.add_argument("--data", help="dataset file supplying the label list")
    p.add_argument("--xml")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_build_net)

    p = sub.add_parser("leaks", help="append leak-label columns to a dataset CSV")
    _add_dataset_flags(p)
    p.add_argument("--relationships", required=True)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_leaks)

    p = sub.add_parser("correct", help="correct a predictions file on a network")
    p.add_argument("--network", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--clamp-epsilon", type=float, default=1e-6, dest="clamp_epsilon")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser(
        "evaluate", help="compare two predictions files against the truth"
    )
    _add_dataset_flags(p)
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "pipeline", help="cross-validated discover/train/correct/evaluate run"
    )
    _add_dataset_flags(p)
    p.add_argument("--learner", default="prior", help="prior | nb | external:<path>")
    p.add_argument("--minsup-entail", type=int, default=2, dest="minsup_entail")
    p.add_argument("--minsup-excl", type=int, default=2, dest="minsup_excl")
    p.add_argument(
        "--exploit", choices=("entail", "excl", "both", "none"), default="both"
    )
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--escalate", action="store_true")
    p.add_argument("--escalate-cap", type=int, default=1000, dest="escalate_cap")
    p.add_argument("--escalate-time", type=float, default=60.0, dest="escalate_time")
    p.add_argument("--clamp-epsilon", type=float, default=1e-6, dest="clamp_epsilon")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except _UsageError as exc:
        print(f"labelnet: {exc}", file=sys.stderr)
        return 1
    except DataContractError as exc:
        print(f"labelnet: {exc}", file=sys.stderr)
        return 2
    except LabelNetError as exc:
        print(f"labelnet: internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Verbs: ``simulate`` (draw a mask from a mechanism spec), ``classify``
(taxonomy cell of a spec), ``analyze`` (mask dependence report),
``impute`` (chained-equations imputation of a CSV), ``experiment`` (the
three studies), ``export-graph`` (DOT rendering of a spec).

Exit codes: 0 success, 1 argument/validation problems (message names the
offending flag or field), 2 runtime failures. Stochastic verbs refuse to
run without ``--seed``; no clock seeding ever happens, so re-running a
command reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analyzer import pairwise_dependence, report_csv_rows, sequential_signature, summary_text
from .experiments import EXPERIMENT_IDS, ExperimentConfig, run_experiment
from .graphs import export_dot
from .impute import ImputationConfig, chain_diagnostics, diagnostics_csv_rows, fcs_impute
from .mechanisms import SpecificationError, classify, load_spec, simulate_mask
from .tabular import (
    DataMatrix,
    MissMask,
    read_csv,
    read_mask_csv,
    read_ordering,
    write_csv,
    write_mask_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract here is exit 1 with usage.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="misslab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"misslab {__version__}")
    sub = parser.add_subparsers(dest="verb", metavar="VERB")

    p = sub.add_parser("simulate", help="draw a missingness mask for complete data")
    p.add_argument("--spec", required=True, help="mechanism spec file (JSON)")
    p.add_argument("--data", required=True, help="complete data CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output mask CSV")

    p = sub.add_parser("classify", help="taxonomy cell of a mechanism spec")
    p.add_argument("--spec", required=True)

    p = sub.add_parser("analyze", help="dependence report for a mask CSV")
    p.add_argument("--mask", required=True)
    p.add_argument("--ordering", default=None, help="column order file (optional)")
    p.add_argument("--out", default=None, help="output prefix (report CSV + summary)")
    p.add_argument("--alpha", type=float, default=0.01)

    p = sub.add_parser("impute", help="multiply impute an incomplete CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("norm", "pmm"), default="pmm")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--maxit", type=int, default=5)
    p.add_argument("--donors", type=int, default=5)
    p.add_argument("--ridge", type=float, default=1e-5)
    p.add_argument("--ignore", default=None,
                   help="file with one 0/1 per row; 1 = exclude from fits")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix")

    p = sub.add_parser("experiment", help="run one of the simulation studies")
    p.add_argument("--id", required=True, choices=EXPERIMENT_IDS)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None,
                   help="JSON file of config overrides (flags win)")

    p = sub.add_parser("export-graph", help="DOT graph of a mechanism spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="output .dot path")

    return parser


def _require_seed(args) -> int:
    if args.seed is None:
        raise _UsageError("--seed is required (no clock seeding)")
    if args.seed < 0:
        raise _UsageError("--seed must be a non-negative integer")
    return args.seed


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise _UsageError(f"{flag}: no such file: {path}")
    return p


def _cmd_simulate(args) -> int:
    seed = _require_seed(args)
    spec = load_spec(_require_file(args.spec, "--spec"))
    data = read_csv(_require_file(args.data, "--data"))
    if not data.is_complete():
        raise _UsageError("--data: simulate needs complete data (no empty fields)")
    mask = simulate_mask(spec, data, seed)
    write_mask_csv(mask, args.out, data.col_names)
    return EXIT_OK


def _cmd_classify(args) -> int:
    spec = load_spec(_require_file(args.spec, "--spec"))
    label = classify(spec)
    payload = {
        "label": label.short(),
        "data_dependence": label.data_dependence,
        "structure": label.structure,
        "shape": label.shape,
        "determinism": label.determinism,
        "sign": label.sign,
    }
    if spec.declared_label is not None:
        payload["declared"] = spec.declared_label.short()
        payload["matches_declared"] = label == spec.declared_label
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_analyze(args) -> int:
    mask, names = read_mask_csv(_require_file(args.mask, "--mask"))
    report = pairwise_dependence(mask, alpha=args.alpha)
    text = summary_text(report)
    if args.ordering is not None:
        ordering = read_ordering(_require_file(args.ordering, "--ordering"), names)
        sig = sequential_signature(mask, ordering, alpha=args.alpha)
        text += (
            f"sequential signature: monotone_fraction={sig.monotone_fraction}, "
            f"forward_only={sig.forward_only}\n"
        )
    if args.out is None:
        sys.stdout.write(text)
    else:
        import csv as _csv

        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        with open(f"{prefix}.report.csv", "w", newline="") as fh:
            _csv.writer(fh, lineterminator="\n").writerows(report_csv_rows(report))
        Path(f"{prefix}.summary.txt").write_text(text)
    return EXIT_OK


def _read_ignore(path: Path, n: int) -> tuple[bool, ...]:
    tokens = [t for t in Path(path).read_text().split() if t]
    if len(tokens) != n:
        raise _UsageError(
            f"--ignore: expected {n} rows of 0/1, found {len(tokens)}"
        )
    try:
        return tuple(bool(int(t)) for t in tokens)
    except ValueError:
        raise _UsageError("--ignore: entries must be 0 or 1") from None


def _cmd_impute(args) -> int:
    seed = _require_seed(args)
    data = read_csv(_require_file(args.data, "--data"))
    ignore = None
    if args.ignore is not None:
        ignore = _read_ignore(_require_file(args.ignore, "--ignore"), data.n)
    cfg = ImputationConfig(
        m=args.m,
        maxit=args.maxit,
        method=args.method,
        donors=args.donors,
        ridge=args.ridge,
        ignore=ignore,
        seed=seed,
    )
    try:
        cfg.validate(data.n)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    result = fcs_impute(data, cfg)
    prefix = Path(args.out)
    if prefix.parent != Path(""):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    outputs = []
    for k, completed in enumerate(result.completed, start=1):
        path = Path(f"{prefix}.imp{k}.csv")
        write_csv(
            DataMatrix(completed, MissMask(np.isnan(completed).astype(np.uint8)),
                       data.col_names),
            path,
        )
        outputs.append(path.name)
    diag = chain_diagnostics(result)
    diag_path = Path(f"{prefix}.diagnostics.csv")
    import csv as _csv

    with open(diag_path, "w", newline="") as fh:
        _csv.writer(fh, lineterminator="\n").writerows(diagnostics_csv_rows(diag))
    outputs.append(diag_path.name)
    manifest = [
        "command: impute",
        f"code_version: misslab {__version__}",
        f"data: {Path(args.data).name}",
        f"method: {args.method}",
        f"m: {args.m}",
        f"maxit: {args.maxit}",
        f"donors: {args.donors}",
        f"ridge: {args.ridge}",
        f"seed: {seed}",
        f"ignored_rows: {sum(ignore) if ignore else 0}",
        f"imputed_columns: {', '.join(result.col_names[j] for j in result.visited_columns) or '(none)'}",
        "outputs: " + ", ".join(outputs),
    ]
    Path(f"{prefix}.manifest.txt").write_text("\n".join(manifest) + "\n")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    overrides = {}
    if args.config is not None:
        cfg_path = _require_file(args.config, "--config")
        try:
            overrides = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise _UsageError(f"--config: not valid JSON: {exc}") from None
        if not isinstance(overrides, dict):
            raise _UsageError("--config: top level must be an object")
    seed = _require_seed(args)
    overrides["experiment"] = args.id
    overrides["seed"] = seed
    overrides["out_dir"] = args.out
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.threads is not None:
        overrides["threads"] = args.threads
    cfg = config_from_mapping(overrides)
    try:
        cfg.validate()
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    run_experiment(cfg)
    return EXIT_OK


def config_from_mapping(values: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from loosely typed key/values."""
    values = dict(values)
    if "reps" in values:
        values["n_replicates"] = values.pop("reps")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise _UsageError(
            f"--config: unknown fields: {', '.join(sorted(unknown))}"
        )
    for key in ("rho_list", "structures", "maxit_list", "q_grid"):
        if key in values and values[key] is not None:
            values[key] = tuple(values[key])
    return ExperimentConfig(**values)


def _cmd_export_graph(args) -> int:
    spec = load_spec(_require_file(args.spec, "--spec"))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(export_dot(spec))
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "classify": _cmd_classify,
    "analyze": _cmd_analyze,
    "impute": _cmd_impute,
    "experiment": _cmd_experiment,
    "export-graph": _cmd_export_graph,
}


def dispatch(argv: list[str]) -> int:
    """Run one command line; returns the exit code instead of exiting."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            parser.print_usage(sys.stderr)
            print("misslab: a verb is required", file=sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.verb](args)
    except _UsageError as exc:
        print(f"misslab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except np.linalg.LinAlgError as exc:
        verb = argv[0] if argv else "?"
        print(f"misslab: {verb} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (SpecificationError, ValueError) as exc:
        print(f"misslab: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse --help / --version land here; propagate its code.
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit 2
        verb = argv[0] if argv else "?"
        print(f"misslab: {verb} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))

"""Command-line front end.

Exit codes: 0 success, 1 validation, contract or usage error, 2 solver
non-convergence or learner divergence. Errors go to stderr as
``whittleq-error[<kind>]: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .exceptions import (
    ContractError,
    ConvergenceError,
    DivergenceError,
    NonIndexableError,
    ValidationError,
)
from .harness import compare_rewards, run_with_baselines, write_run
from .model import validate
from .oracle import INDEX_TOL, scan_indexability, whittle_indices

OUT_ENV = "WHITTLEQ_OUT"
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


# ----------------------------------------------------------------------------
# plot data


def emit_plot_data(record_sets: dict, figure: str) -> str:
    """Long-format CSV ``step,series,value`` for the index or reward figure.

    ``record_sets`` maps a policy name to its list of per-seed records.
    Estimated indices and rewards are medians across seeds. The indices
    figure uses the first record set and adds the exact indices as
    constant reference series.
    """
    if figure not in ("indices", "rewards"):
        raise ValueError(f"unknown figure {figure!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "series", "value"])
    record_sets = {k: v for k, v in record_sets.items() if v}
    if not record_sets:
        return buf.getvalue()
    if figure == "rewards":
        for name, records in record_sets.items():
            med = np.median([r.avg_reward for r in records], axis=0)
            for step, value in zip(records[0].steps, med):
                w.writerow([int(step), name, repr(float(value))])
        return buf.getvalue()

    records = next(iter(record_sets.values()))
    first = records[0]
    lam = np.median([r.lambdas for r in records], axis=0)
    multi = len(first.dims) > 1
    for c, d in enumerate(first.dims):
        for k in range(d):
            label = f"lambda_c{c}_{k + 1}" if multi else f"lambda_{k + 1}"
            for step, value in zip(first.steps, lam[:, c, k]):
                w.writerow([int(step), f"estimated_{label}", repr(float(value))])
            exact = float(first.exact_indices[c, k])
            for step in first.steps:
                w.writerow([int(step), f"exact_{label}", repr(exact)])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# verbs


def _load_models(path):
    return cfgmod.arm_models(cfgmod.load_model_dict(path))


def cmd_validate(args) -> int:
    status = EXIT_OK
    for c, model in enumerate(_load_models(args.model)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = validate(model)
        print(f"class {c}: {report.status} ({report.n_policies} policies checked"
              f"{'' if report.exhaustive else ', sampled'})")
        if report.reference_states:
            print(f"  reference states: {report.reference_states}")
        for msg in report.messages:
            print(f"  {'warning' if report.ok else 'error'}: {msg}")
        if not report.ok:
            status = EXIT_INVALID
    return status


def cmd_oracle(args) -> int:
    models = _load_models(args.model)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    multi = len(models) > 1
    w.writerow((["class"] if multi else []) + ["state", "lambda_star", "residual", "bracket_width"])
    for c, model in enumerate(models):
        table = whittle_indices(model, tol=args.tol)
        for state, lam, res, width in table.rows():
            w.writerow(([c] if multi else []) + [state, repr(lam), repr(res), repr(width)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, step, stop = (float(v) for v in text.split(":"))
    except ValueError:
        raise ValidationError(f"grid must look like start:step:stop, got {text!r}") from None
    n = int(round((stop - start) / step))
    return start + step * np.arange(n + 1)


def cmd_scan(args) -> int:
    status = EXIT_OK
    for c, model in enumerate(_load_models(args.model)):
        if args.grid:
            grid = _parse_grid(args.grid)
        else:
            lam = whittle_indices(model).lambda_star
            grid = _parse_grid(f"{np.floor(lam.min()) - 1}:0.05:{np.ceil(lam.max()) + 1}")
        report = scan_indexability(model, grid)
        print(f"class {c}: {'pass' if report.passed else 'FAIL'}: {report.summary}")
        if not report.passed:
            status = EXIT_INVALID
    return status


def _experiment(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seeds=[{args.seed}]")
    if args.horizon is not None:
        overrides.append(f"horizon={args.horizon}")
    if args.epsilon is not None:
        overrides.append(f"policy.epsilon={args.epsilon}")
    data = cfgmod.load_experiment_dict(args.config, overrides)
    return cfgmod.experiment_from_dict(data), overrides


def _run_and_write(args, with_baselines: bool):
    cfg, overrides = _experiment(args)
    if with_baselines and not cfg.baselines:
        cfg.baselines = ["exact-indices"]
    if not with_baselines:
        cfg.baselines = []
    out_root = Path(args.out) if args.out else default_out_root() / cfg.name
    sets = run_with_baselines(cfg, n_jobs=args.jobs)
    extra = {"overrides": overrides}
    for mode, records in sets.items():
        sub = cfg if mode == cfg.policy.mode else cfg.with_policy(mode=mode, epsilon=0.0)
        target = out_root if mode == cfg.policy.mode else out_root / "baselines" / mode
        for rec in records:
            write_run(rec, sub, target, extra=extra)
    return cfg, sets, out_root


def cmd_learn(args) -> int:
    cfg, sets, out_root = _run_and_write(args, with_baselines=False)
    main = sets[cfg.policy.mode]
    (out_root / "indices_plot.csv").write_text(emit_plot_data({cfg.policy.mode: main}, "indices"))
    for rec in main:
        if cfg.policy.mode == "learned-indices":
            d = rec.dims[0]
            est = ", ".join(f"{v:.4f}" for v in rec.lambdas[-1, 0, :d])
            print(f"seed {rec.seed}: final index estimates [{est}]")
    print(f"wrote {out_root}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg, sets, out_root = _run_and_write(args, with_baselines=True)
    main_name = cfg.policy.mode
    (out_root / "rewards_plot.csv").write_text(emit_plot_data(sets, "rewards"))
    for name, records in sets.items():
        if name == main_name:
            continue
        cmp = compare_rewards(sets[main_name], records)
        path = out_root / f"compare_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", f"{main_name}_median", f"{main_name}_iqr", f"{name}_median", f"{name}_iqr"])
            for row in zip(cmp.steps, cmp.median_a, cmp.iqr_a, cmp.median_b, cmp.iqr_b):
                w.writerow([int(row[0]), *(repr(float(v)) for v in row[1:])])
        print(f"{main_name} / {name}: final ratio {cmp.final_ratio:.4f} "
              f"(per seed {', '.join(f'{r:.4f}' for r in cmp.ratios)})")
    print(f"wrote {out_root}")
    return EXIT_OK


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the validation code, keeping 2 for solver failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"whittleq-error[usage]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="whittleq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="exact Whittle indices as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--tol", type=float, default=INDEX_TOL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("scan-indexability", help="check nested passive sets over a subsidy grid")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", help="start:step:stop, e.g. --grid=-2:0.05:2 (default spans the indices +-1 at step 0.05)")
    p.set_defaults(func=cmd_scan)

    for verb, func, text in (
        ("learn", cmd_learn, "run the learner and write per-seed run directories"),
        ("compare", cmd_compare, "run the learner against baselines and summarise rewards"),
    ):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", required=True, help="experiment file or preset name")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or runs/<name>)")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, repeatable")
        p.add_argument("--jobs", type=int, default=1, help="parallel seed replications")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ContractError, NonIndexableError) as exc:
        kind = {ValidationError: "validation", ContractError: "contract"}.get(type(exc), "indexability")
        print(f"whittleq-error[{kind}]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, DivergenceError) as exc:
        kind = "convergence" if isinstance(exc, ConvergenceError) else "divergence"
        print(f"whittleq-error[{kind}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import evaluation as ev
from .factorization import DegenerateError, IdentifiabilityError
from .marginals import DataError, Dataset, load_csv, read_categorical_csv, save_csv, save_schema
from .model import MISSING, full_tensor, sample
from .solver import SolverConfig

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _label_last(data: Dataset, label_col):
    if label_col is None:
        return data
    if label_col not in data.names:
        raise UsageError(f"label column {label_col!r} not in {list(data.names)}")
    idx = data.names.index(label_col)
    order = [n for n in range(data.num_vars) if n != idx] + [idx]
    return data.select(order)


def _solver_config(args, rank):
    grid = tuple(float(x) for x in args.rho_grid.split(",")) if args.rho_grid else None
    return SolverConfig(
        rank=rank, num_projections=args.projections, rho=args.rho, rho_grid=grid,
        epsilon=args.tol, max_outer=args.max_outer, max_inner=args.max_inner,
        seed=args.seed, g3_objective=args.g3_objective,
    )


def _add_solver_args(p):
    p.add_argument("--method", default="juror-a", choices=ev.METHODS)
    p.add_argument("--projections", type=int, default=200, help="directions M")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--rho-grid", help="comma-separated rho values to cross-validate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-outer", type=int, default=50)
    p.add_argument("--max-inner", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--g3-objective", choices=("J", "J1"), default="J")


def cmd_gen(args):
    gen = {"pmf": ev.gen_pmf_model, "cim": ev.gen_cim_model,
           "separable": ev.gen_separable_model}[args.kind]
    model = gen(args.rank, args.card, args.num_vars, args.seed)
    ev.save_model(model, args.model_out,
                  {"method": f"gen-{args.kind}", "seed": args.seed})
    if args.data_out:
        data = sample(model, args.samples, args.kappa, seed=args.seed + 1)
        save_csv(data, args.data_out)
        if args.schema_out:
            save_schema(data, args.schema_out)
    return 0


def cmd_estimate(args):
    data = _label_last(load_csv(args.data, args.schema), args.label_col)
    if args.kappa < 1.0:
        rng = np.random.default_rng(args.seed)
        codes = data.codes.copy()
        codes[rng.random(codes.shape) >= args.kappa] = MISSING
        data = Dataset(codes, data.cardinalities, data.names)
    cfg = _solver_config(args, args.rank)
    model = ev.fit_method(args.method, data, args.rank, cfg, args.seed)
    cfg_dict = {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose")}
    ev.save_model(model, args.out, {
        "method": args.method, "seed": args.seed, "variables": list(data.names),
        "config_hash": ev.config_hash(cfg_dict),
    })
    return 0


def cmd_evaluate(args):
    est, _ = ev.load_model(args.model)
    truth, _ = ev.load_model(args.truth)
    if args.metric == "mse":
        value = ev.mse_aligned(truth, est)
    else:
        value = ev.mae(full_tensor(truth), full_tensor(est))
    print(f"{args.metric}\t{value:.10g}")
    return 0


def cmd_classify(args):
    model, _ = ev.load_model(args.model)
    data = _label_last(load_csv(args.data, args.schema), args.label_col)
    pred = ev.predict(model, data.codes[:, :-1])
    if args.predictions:
        with open(args.predictions, "w", encoding="utf-8") as fh:
            fh.writelines(f"{int(y)}\n" for y in pred)
    if args.label_col is not None:
        print(f"accuracy\t{ev.accuracy(model, data):.6f}")
    return 0


def cmd_cv_rank(args):
    train = _label_last(load_csv(args.train, args.schema), args.label_col)
    val = _label_last(load_csv(args.val, args.schema), args.label_col)
    grid = [int(x) for x in args.grid.split(",")]
    cfg = _solver_config(args, grid[0])
    best, scores = ev.cross_validate_rank(train, val, grid, args.method, cfg)
    for F in sorted(scores):
        print(f"{F}\t{scores[F]:.6f}")
    print(f"best\t{best}")
    return 0


def cmd_experiment(args):
    spec = ev.ExperimentSpec.from_json(args.spec)
    if args.out:
        spec.output = args.out
    result = ev.run_experiment(spec)
    if not spec.output:
        sys.stdout.write(result.table())
    return 0


def cmd_encode(args):
    data, categories = read_categorical_csv(args.input, has_header=not args.no_header)
    save_csv(data, args.output)
    schema = {
        "cardinalities": dict(zip(data.names, data.cardinalities)),
        "categories": dict(zip(data.names, categories)),
    }
    if args.label_col:
        schema["label"] = args.label_col
    with open(args.schema_out, "w", encoding="utf-8") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def build_parser():
    parser = _Parser(prog="juror", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="draw a synthetic model and samples")
    p.add_argument("--kind", choices=("pmf", "cim", "separable"), default="pmf")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--card", type=int, required=True, help="categories per variable")
    p.add_argument("--num-vars", type=int, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-out", required=True)
    p.add_argument("--data-out")
    p.add_argument("--schema-out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("estimate", help="fit a model to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--kappa", type=float, default=1.0,
                   help="additionally hide each entry with probability 1-kappa")
    p.add_argument("--label-col", help="move this column last (for classification)")
    p.add_argument("--out", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="compare an estimate with a ground-truth model")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metric", choices=("mse", "mae"), default="mse")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="MAP-classify rows with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--label-col")
    p.add_argument("--predictions")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cv-rank", help="choose the rank by validation accuracy")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--schema")
    p.add_argument("--label-col", required=True)
    p.add_argument("--grid", required=True, help="comma-separated ranks")
    _add_solver_args(p)
    p.set_defaults(func=cmd_cv_rank)

    p = sub.add_parser("experiment", help="run a synthetic recovery grid")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("encode", help="integer-code a CSV of string categories")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--schema-out", required=True)
    p.add_argument("--label-col")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=cmd_encode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"juror: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IdentifiabilityError as exc:
        print(f"juror: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"juror: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError, KeyError) as exc:
        print(f"juror: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

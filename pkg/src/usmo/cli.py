"""Command-line entry point: ``usmo {train,predict,eval,oracle}``.

Exit status: 0 success, 1 input or parse error, 2 configuration error,
3 budget exceeded.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import model as model_io
from . import oracle
from .data import Dataset, binarize_labels, f_measure, load_csv, load_libsvm, make_pu_split
from .exceptions import ConfigurationError, InputError, USMOError
from .initializer import RANKED, UNIFORM, initial_state
from .kernel import GAUSSIAN, LINEAR, KernelSpec
from .solver import Hyperparams, derive_constants, run


def _fmt_score(x):
    s = f"{x:.9g}"
    if not any(ch in s for ch in ".enia"):
        s += ".0"
    return s


def _format_of(args, path):
    if args.format:
        return args.format
    return "csv" if str(path).lower().endswith(".csv") else "libsvm"


def _load(args, path, n_features=None):
    if _format_of(args, path) == "csv":
        return load_csv(path, label_column=args.label_col, header=args.header, n_features=n_features)
    return load_libsvm(path, n_features=n_features)


def _pad(X, d):
    if X.shape[1] == d:
        return X
    out = np.zeros((X.shape[0], d))
    out[:, : X.shape[1]] = X
    return out


def _hyperparams(args, pi):
    if args.kernel == LINEAR:
        kernel = KernelSpec.linear()
    else:
        kernel = KernelSpec(args.kernel, args.scale)
    return Hyperparams(pi=pi, lam=args.lam, tau=args.tau, kernel=kernel, max_full_scans=args.max_full_scans)


def _training_set(args):
    """(Dataset, prior, hidden labels or None) from either input style."""
    if args.positive or args.unlabeled:
        if not (args.positive and args.unlabeled):
            raise ConfigurationError("--positive and --unlabeled must be given together")
        P, _ = _load(args, args.positive)
        U, _ = _load(args, args.unlabeled)
        d = max(P.shape[1], U.shape[1])
        if args.pi is None:
            raise ConfigurationError("--pi is required with --positive/--unlabeled (no class proportion to infer)")
        return Dataset(_pad(P, d), _pad(U, d)), args.pi, None
    if not args.data:
        raise ConfigurationError("give --data, or --positive and --unlabeled")
    X, y = _load(args, args.data)
    y = binarize_labels(y, args.target_class)
    split = make_pu_split(X, y, args.labeled_fraction, args.seed)
    pi = split.prior if args.pi is None else args.pi
    return split.dataset, pi, split.hidden_labels


def _train(args):
    ds, pi, hidden = _training_set(args)
    h = _hyperparams(args, pi)
    init = initial_state(ds, h, mode=args.init)
    m, trace = run(ds, h, init)
    return ds, h, m, trace, hidden


def cmd_train(args):
    if not args.model:
        raise ConfigurationError("--model is required for train")
    _, _, m, trace, _ = _train(args)
    model_io.save(m, args.model)
    if args.trace:
        trace.to_csv(args.trace)
    print(
        f"objective={trace.final_objective!r} iters={trace.iterations} full_scans={trace.full_scans} "
        f"kernel_evals={trace.kernel_evals} time_ms={trace.elapsed_ms:.3f}"
    )
    return 0


def cmd_predict(args):
    if not args.model or not args.data:
        raise ConfigurationError("--model and --data are required for predict")
    m = model_io.load(args.model)
    X, _ = _load(args, args.data, n_features=None)
    if X.shape[0] and X.shape[1] > m.dim:
        raise InputError(f"data has {X.shape[1]} features, model expects {m.dim}")
    if _format_of(args, args.data) == "csv" and X.shape[0] and X.shape[1] != m.dim:
        raise InputError(f"data has {X.shape[1]} features, model expects {m.dim}")
    X = _pad(X, m.dim) if X.shape[0] else np.zeros((0, m.dim))
    scores = m.decision_function(X) if X.shape[0] else np.zeros(0)
    lines = "".join(f"{'+1' if s >= 0.0 else '-1'} {_fmt_score(s)}\n" for s in scores)
    if args.output:
        Path(args.output).write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
    return 0


def cmd_eval(args):
    if not args.data:
        raise ConfigurationError("--data is required for eval")
    ds, _, m, trace, hidden = _train(args)
    if args.model:
        model_io.save(m, args.model)
    if args.trace:
        trace.to_csv(args.trace)
    print(f"f_measure={f_measure(m.predict(ds.unlabeled), hidden)!r}")
    return 0


def cmd_oracle(args):
    ds, pi, _ = _training_set(args)
    h = _hyperparams(args, pi)
    c = derive_constants(h, ds.p, ds.n)
    dense = oracle.solve_dense(ds, c, h.kernel)
    print(f"oracle_objective={dense.objective!r} method={dense.method}")
    status = 0
    if args.enumerate or ds.n <= oracle.MAX_ENUM:
        try:
            grid = oracle.enumerate_tiny(ds, c, h.kernel, args.grid_steps)
            print(f"enumerate_objective={grid.objective!r} certified_gap={grid.certified_gap!r}")
        except InputError as exc:
            print(f"usmo: enumeration: {exc}", file=sys.stderr)
            status = exc.exit_code
    _, trace = run(ds, h, initial_state(ds, h, mode=args.init))
    print(f"usmo_objective={trace.final_objective!r}")
    print(f"usmo_minus_oracle={trace.final_objective - dense.objective!r}")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="usmo", description="PU learning with the USMO solver")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--positive", help="labeled positives (labels ignored)")
    common.add_argument("--unlabeled", help="unlabeled pool (labels ignored)")
    common.add_argument("--data", help="fully labeled data to split (train/eval/oracle) or samples to score (predict)")
    common.add_argument("--format", choices=("libsvm", "csv"), help="input format; default from the file extension")
    common.add_argument("--header", action="store_true", help="CSV inputs start with a header row")
    common.add_argument("--label-col", type=int, default=0, help="CSV label column (default 0)")
    common.add_argument("--target-class", type=float, help="one-vs-all: this label is positive")
    common.add_argument("--labeled-fraction", type=float, default=0.2, help="share of positives to label")
    common.add_argument("--pi", type=float, help="class prior; defaults to the split's class proportion")
    common.add_argument("--lambda", dest="lam", type=float, default=0.01)
    common.add_argument("--tau", type=float, default=1e-3)
    common.add_argument("--kernel", choices=(GAUSSIAN, LINEAR), default=GAUSSIAN)
    common.add_argument("--scale", type=float, default=1.0, help="gaussian kernel width")
    common.add_argument("--init", choices=(RANKED, UNIFORM), default=RANKED)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--model", help="model file")
    common.add_argument("--trace", help="write the per-iteration trace CSV here")
    common.add_argument("--max-full-scans", type=int, default=1000)
    common.add_argument("--output", help="predictions file (default stdout)")

    sub.add_parser("train", parents=[common], help="train and write a model")
    sub.add_parser("predict", parents=[common], help="score samples with a model")
    sub.add_parser("eval", parents=[common], help="split, train and report the transductive F-measure")
    o = sub.add_parser("oracle", parents=[common], help="compare USMO with the dense reference solvers")
    o.add_argument("--enumerate", action="store_true", help="also run grid enumeration (n <= 4)")
    o.add_argument("--grid-steps", type=int, default=401)
    return parser


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval, "oracle": cmd_oracle}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except USMOError as exc:
        print(f"usmo: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # sklearn/numpy style validation of user inputs
        print(f"usmo: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"usmo: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

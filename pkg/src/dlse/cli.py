"""
Command-line interface: ``dlse {gen,fit,predict,metrics,optimize,emit-sf,check}``.

Reports go to stdout as JSON; logging goes to stderr at the level named by
DLSE_LOG (quiet, info or debug).  Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checks, core, dca, gpos, io, training
from .errors import DataError, DlseError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("dlse")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj):
    print(json.dumps(obj))


def _temperature(text):
    if text == "auto":
        return None
    try:
        T = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("T must be a positive number or 'auto'") from None
    if not T > 0:
        raise argparse.ArgumentTypeError("T must be positive")
    return T


def parse_set(spec, n):
    """``box:l1,u1,...,ln,un`` (or one ``l,u`` pair for all coordinates) or ``simplex:total``."""
    kind, _, rest = spec.partition(":")
    try:
        vals = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise DataError(f"malformed set spec {spec!r}") from None
    if kind == "box" and len(vals) >= 2 and len(vals) % 2 == 0:
        pairs = np.array(vals).reshape(-1, 2)
        if pairs.shape[0] == 1:
            pairs = np.repeat(pairs, n, axis=0)
        if pairs.shape[0] != n:
            raise DataError(f"box has {pairs.shape[0]} coordinates, model has {n}")
        return dca.Box(pairs[:, 0], pairs[:, 1])
    if kind == "simplex" and len(vals) == 1:
        return dca.ScaledSimplex(vals[0], n)
    raise DataError(f"malformed set spec {spec!r}; expected box:l,u,... or simplex:total")


def cmd_gen(args):
    X, y = io.GENERATORS[args.oracle](args.m, args.seed)
    io.write_data(args.out, X, y)
    _emit({"oracle": args.oracle, "m": args.m, "seed": args.seed, "out": str(args.out)})


def cmd_fit(args):
    X, y = io.read_data(args.data)
    cfg = training.TrainConfig(K=args.K, T=args.T, max_epochs=args.epochs, rng_seed=args.seed,
                               restarts=args.restarts, holdout_fraction=args.holdout)
    start = time.perf_counter()
    report = training.fit(training.Dataset(X, y), cfg)
    io.write_model(report.model, args.out)
    _emit(dict(report.summary(), seconds=time.perf_counter() - start, out=str(args.out)))


def _predictions(args):
    m = io.read_model(args.model)
    X, y = io.read_data(args.data, require_y=False)
    if X.shape[1] != m.n:
        raise DataError(f"data has {X.shape[1]} inputs, model expects {m.n}")
    return X, y, core.eval_dlse(m, X)


def cmd_predict(args):
    X, y, pred = _predictions(args)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        head = [f"x{i + 1}" for i in range(X.shape[1])]
        w.writerow(head + (["y", "y_pred", "abs_err"] if y is not None else ["y_pred"]))
        for i, row in enumerate(X):
            cells = [repr(float(v)) for v in row]
            if y is not None:
                cells += [repr(float(y[i])), repr(float(pred[i])), repr(float(abs(pred[i] - y[i])))]
            else:
                cells.append(repr(float(pred[i])))
            w.writerow(cells)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_metrics(args):
    X, y, pred = _predictions(args)
    if y is None:
        raise DataError("metrics need a y column")
    _emit(io.metrics(y, pred))


def cmd_optimize(args):
    m = io.read_model(args.model)
    S = parse_set(args.set, m.n)
    x0 = None
    if args.x0 is not None:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    cfg = dca.DcaConfig(tol=args.tol, x0=x0)
    start = time.perf_counter()
    x, trace = dca.multistart(m, S, cfg, starts=args.starts, seed=args.seed, screen=args.screen)
    result = {"x_star": x.tolist(), "objective": trace.objectives[-1],
              "iterations": trace.outer_iterations, "reason": trace.reason,
              "seconds": time.perf_counter() - start, "trace_path": None}
    if args.out:
        out = Path(args.out)
        trace_path = out.with_name(out.stem + ".trace.csv")
        trace.to_csv(trace_path)
        result["trace_path"] = str(trace_path)
        out.write_text(json.dumps(result) + "\n", encoding="utf-8")
    _emit(result)


def cmd_emit_sf(args):
    m = io.read_model(args.model)
    r = gpos.rationalize(m, args.tol, radius=args.radius)
    e, p, q = gpos.emit_sf(r)
    text = gpos.format_sf(e, caret=not args.expand)
    side = {"p": p, "q": q, "kappa": r.kappa, "radius": r.radius}
    if args.out:
        out = Path(args.out)
        out.write_text(text + "\n", encoding="utf-8")
        side_path = out.with_name(out.name + ".json")
        side_path.write_text(json.dumps(side) + "\n", encoding="utf-8")
        side["sidecar"] = str(side_path)
    print(text)
    _emit(side)


def cmd_check(args):
    results = checks.run_checks(args.seed)
    for r in results:
        _emit(r.to_dict())
    ok = all(r.passed for r in results)
    _emit({"passed": ok, "properties": len(results)})
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser():
    p = _Parser(prog="dlse", description="Fit, optimize and export DLSE surrogate models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("oracle", choices=sorted(io.GENERATORS))
    g.add_argument("--m", type=int, default=100, help="number of samples")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="train a model on a CSV dataset")
    f.add_argument("data")
    f.add_argument("--K", type=int, default=10, help="terms per component")
    f.add_argument("--T", type=_temperature, default=None, help="temperature or 'auto'")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--epochs", type=int, default=3000)
    f.add_argument("--restarts", type=int, default=6)
    f.add_argument("--holdout", type=float, default=0.0, help="fraction held out for validation")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    for name, fn, helptext in (("predict", cmd_predict, "evaluate a model on a CSV file"),
                               ("metrics", cmd_metrics, "validation metrics on a CSV file")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("model")
        s.add_argument("data")
        if name == "predict":
            s.add_argument("--out")
        s.set_defaults(func=fn)

    o = sub.add_parser("optimize", help="minimize a model over a box or scaled simplex")
    o.add_argument("model")
    o.add_argument("--set", required=True, help="box:l1,u1,... or simplex:total")
    o.add_argument("--tol", type=float, default=1e-6)
    o.add_argument("--starts", type=int, default=10)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--screen", type=int, default=100,
                   help="draw this many candidates per random start and keep the best")
    o.add_argument("--x0", help="comma-separated feasible start (default: set center)")
    o.add_argument("--out")
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("emit-sf", help="print the subtraction-free expression of a model")
    e.add_argument("model")
    e.add_argument("--tol", type=float, default=1e-4)
    e.add_argument("--radius", type=float, default=1.0)
    e.add_argument("--expand", action="store_true", help="write powers as repeated products")
    e.add_argument("--out")
    e.set_defaults(func=cmd_emit_sf)

    c = sub.add_parser("check", help="run the built-in property suite")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    try:
        level = os.environ.get("DLSE_LOG", "quiet")
        if level not in LOG_LEVELS:
            raise UsageError(f"DLSE_LOG must be one of {', '.join(LOG_LEVELS)}")
        logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        args = build_parser().parse_args(argv)
        return args.func(args) or EXIT_OK
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DlseError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:  # config validation
        print(f"invalid argument: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())

"""
File formats, synthetic data generators and fit metrics.

Models are JSON documents; floats are written with Python's shortest
round-trip repr, so a write/read cycle is bit-exact.  Data files are CSV
with header ``x1,...,xn,y`` (the ``y`` column is optional for prediction
inputs).
"""

import csv
import json
import math

import numpy as np

from .core import DlseModel, LseParams
from .errors import DataError, DimensionError, DlseError
from .pwa import PwaSpec

SCHEMA_VERSION = 1


# --- models ----------------------------------------------------------------

def _component_dict(p):
    return {"K": p.K, "alphas": p.alphas.tolist(), "betas": p.betas.tolist()}


def model_to_dict(m):
    return {"schema_version": SCHEMA_VERSION, "n": m.n, "T": m.T,
            "plus": _component_dict(m.plus), "minus": _component_dict(m.minus)}


def model_from_dict(d):
    try:
        if d["schema_version"] != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {d['schema_version']!r}")
        n, T = int(d["n"]), d["T"]
        comps = []
        for name in ("plus", "minus"):
            c = d[name]
            p = LseParams(T, np.array(c["alphas"], dtype=float).reshape(-1, n), c["betas"])
            if p.K != c["K"]:
                raise DataError(f"{name}.K does not match the parameter arrays", K=c["K"], rows=p.K)
            comps.append(p)
    except KeyError as e:
        raise DataError(f"model file is missing field {e}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, DlseError):
            raise DataError(f"invalid model file: {e}") from None
        raise DataError(f"malformed model file: {e}") from None
    return DlseModel(*comps)


def write_model(m, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m), fh, indent=1)
        fh.write("\n")


def read_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not valid JSON (line {e.lineno})") from None
    return model_from_dict(d)


def write_pwa(s, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(s.to_dict(), fh)
        fh.write("\n")


def read_pwa(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return PwaSpec.from_dict(json.load(fh))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not valid JSON (line {e.lineno})") from None


# --- data ------------------------------------------------------------------

def write_data(path, X, y=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    header = [f"x{i + 1}" for i in range(X.shape[1])] + ([] if y is None else ["y"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(X):
            cells = [repr(float(v)) for v in row]
            if y is not None:
                cells.append(repr(float(y[i])))
            w.writerow(cells)


def read_data(path, require_y=True):
    """Return ``(X, y)``; ``y`` is None when the file has no ``y`` column."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_y = bool(header) and header[-1] == "y"
        n = len(header) - has_y
        if n < 1 or header[:n] != [f"x{i + 1}" for i in range(n)]:
            raise DataError(f"{path}:1: header must be x1,...,xn[,y]", header=header)
        if require_y and not has_y:
            raise DataError(f"{path}:1: a y column is required")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}", line=line)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}:{line}: cell is not a number", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line}: non-finite value", line=line)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    A = np.array(rows)
    return (A[:, :n], A[:, n]) if has_y else (A, None)


# --- generators ------------------------------------------------------------

def example1_phi(x):
    x = np.asarray(x, dtype=float)
    return x ** 2 + np.sin(2 * np.pi * x)


def gen_example1(m, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=(m, 1))
    return x, example1_phi(x[:, 0])


DIET_TOTAL = 185.0
DIET_GAPS = np.array([3.0, 2.0, 4.0, 3.0])  # hours between consecutive meals
DIET_DECAY = 3.0


def diet5_oracle(X):
    """Synthetic five-meal response on the simplex (stand-in for a meal simulator).

    Meal j's effective load is x_j plus what is left of earlier loads, which
    decays as exp(-gap / 3) between meals.  Each meal produces a concave
    peak 90 + 1.6 e - 0.0025 e^2 and the response is a smooth maximum
    (temperature 5) over the five peaks.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 5:
        raise DimensionError("diet5 takes 5 inputs", got=X.shape[1])
    eff = np.empty_like(X)
    carry = np.zeros(X.shape[0])
    for j in range(5):
        if j:
            carry = carry * np.exp(-DIET_GAPS[j - 1] / DIET_DECAY)
        eff[:, j] = X[:, j] + carry
        carry = eff[:, j]
    peak = 90.0 + 1.6 * eff - 0.0025 * eff ** 2
    top = peak.max(axis=1)
    return top + 5.0 * np.log(np.exp((peak - top[:, None]) / 5.0).sum(axis=1))


def sample_simplex(rng, m, n=5, total=DIET_TOTAL):
    e = rng.exponential(size=(m, n))
    return total * e / e.sum(axis=1, keepdims=True)


def gen_diet5(m, seed):
    X = sample_simplex(np.random.default_rng(seed), m)
    return X, diet5_oracle(X)


GENERATORS = {"example1": gen_example1, "diet5": gen_diet5}


# --- metrics ---------------------------------------------------------------

def metrics(y, yhat):
    """Mean Sq., Mean Rel., Max Abs., Max Rel. and r2 of predictions ``yhat``."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise DimensionError("targets and predictions must be non-empty and aligned")
    err = np.abs(yhat - y)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = err / np.abs(y)
    ss_tot = np.sum((y - y.mean()) ** 2)
    ss_res = np.sum(err ** 2)
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else -math.inf
    return {"mean_sq": float(np.mean(err ** 2)), "mean_rel": float(np.mean(rel)),
            "max_abs": float(err.max()), "max_rel": float(np.max(rel)), "r2": float(r2)}

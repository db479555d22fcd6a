"""
Log-log counterparts of LSE_T models.

Under z = exp(x) an LSE_T component becomes a generalized posynomial

    psi_T(z) = (sum_k c_k^(1/T) * z^(alpha_k / T))^T,   c_k = exp(beta_k),

and a DLSE_T model becomes a ratio of two of them.  With T = 1/p and
exponents on a common grid 1/q, the ratio equals E(z^(1/q))^(1/p) for a
rational expression E built from +, *, / and positive rational constants
only.  This module rationalizes models, emits E, parses and prints it, and
evaluates it.
"""

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from . import core, training
from .core import DlseModel, LseParams
from .errors import DataError, DimensionError, RationalizationError

Q_MAX = 10 ** 6


@dataclass(frozen=True, eq=False)
class GposParams:
    T: float
    coeffs: np.ndarray
    exponents: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        a = np.array(self.exponents, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.shape[0] != c.size:
            raise DimensionError("need one coefficient per exponent row")
        if not (np.all(np.isfinite(c)) and np.all(c > 0)):
            raise DataError("coefficients must be positive and finite")
        if not self.T > 0:
            raise DataError("T must be positive")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "exponents", a)

    @property
    def n(self):
        return self.exponents.shape[1]


def lse_to_gpos(p):
    return GposParams(p.T, np.exp(p.betas), p.alphas)


def gpos_to_lse(g):
    return LseParams(g.T, g.exponents, np.log(g.coeffs))


def _positive(z, n):
    z = np.asarray(z, dtype=float)
    if z.shape[-1:] != (n,) and not (n == 1 and z.ndim <= 1):
        raise DimensionError(f"expected points of dimension {n}", got=z.shape)
    if not np.all(z > 0):
        raise DataError("GPOS functions are only defined for positive inputs")
    return z


def eval_gpos(g, z):
    """psi_T(z), evaluated as exp(T * LSE(...)) so large powers cannot overflow early."""
    z = _positive(z, g.n)
    return np.exp(core.eval_lse(gpos_to_lse(g), np.log(z)))


def relative_error(reference, approx):
    """|reference - approx| / min(reference, approx) for positive arguments."""
    ref = np.asarray(reference, dtype=float)
    app = np.asarray(approx, dtype=float)
    if np.any(ref <= 0) or np.any(app <= 0):
        raise DataError("relative error needs positive arguments")
    out = np.abs(ref - app) / np.minimum(ref, app)
    return float(out) if out.ndim == 0 else out


class PositiveFit(NamedTuple):
    report: training.TrainReport
    numerator: GposParams
    denominator: GposParams


def fit_positive(z, w, cfg):
    """Fit positive data w ~ psi_T(z) / psi'_T(z) through the log-log transform."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(z <= 0) or np.any(w <= 0):
        raise DataError("positive-data fitting needs positive inputs and targets")
    report = training.fit(training.Dataset(np.log(z), np.log(w)), cfg)
    return PositiveFit(report, lse_to_gpos(report.model.plus), lse_to_gpos(report.model.minus))


# --- rationalization -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RationalGpos:
    """Rational GPOS part: coefficients c_k and exponents numerators[k] / q."""

    coeffs: tuple
    numerators: np.ndarray

    @property
    def K(self):
        return len(self.coeffs)


@dataclass(frozen=True, eq=False)
class RationalDlse:
    """psi_T / psi'_T with T = 1/p exactly and every exponent a multiple of 1/q."""

    p: int
    q: int
    plus: RationalGpos
    minus: RationalGpos
    kappa: float = 0.0
    radius: float = 1.0

    @property
    def T(self):
        return Fraction(1, self.p)

    @property
    def n(self):
        return self.plus.numerators.shape[1]

    def component(self, part):
        part = self.plus if part == "plus" else self.minus
        betas = np.array([_log_fraction(c) for c in part.coeffs])
        return LseParams(1.0 / self.p, part.numerators / self.q, betas)

    def to_model(self):
        return DlseModel(self.component("plus"), self.component("minus"))

    def eval_ratio(self, x):
        """psi_T(x) / psi'_T(x) for positive x, through the log domain."""
        x = _positive(x, self.n)
        return np.exp(core.eval_dlse(self.to_model(), np.log(x)))


def _log_fraction(c):
    return math.log(c.numerator) - math.log(c.denominator)


def _choose_p(T, log_k, budget):
    """Smallest p >= 1 with |T - 1/p| * log_k <= budget, or None with the best error."""
    if log_k == 0:
        return max(1, round(1 / T)), 0.0
    cands = sorted({max(1, math.floor(1 / T)), max(1, math.ceil(1 / T))})
    errs = [abs(T - 1 / p) * log_k for p in cands]
    for p, e in zip(cands, errs):
        if e <= budget:
            return p, e
    return None, min(errs)


def _alpha_error(alphas, q):
    return np.linalg.norm(np.rint(alphas * q) / q - alphas, axis=1).max()


def _choose_q(alpha_rows, radius, budget, q_max):
    """Smallest common denominator q <= q_max with max_k ||alpha_k - round(alpha_k q)/q|| R <= budget."""
    A = np.vstack(alpha_rows)
    chunk = 4096
    start = 1
    while start <= q_max:
        qs = np.arange(start, min(start + chunk, q_max + 1), dtype=float)
        scaled = A[None, :, :] * qs[:, None, None]
        err = np.linalg.norm((np.rint(scaled) - scaled) / qs[:, None, None], axis=2).max(axis=1)
        ok = np.nonzero(err * radius <= budget)[0]
        if ok.size:
            return int(qs[ok[0]])
        start += chunk
    return None


def _rational_coeff(beta, budget):
    c = math.exp(beta)
    exact = Fraction(c)
    den = 1
    while den < exact.denominator:
        cand = exact.limit_denominator(den)
        if cand > 0 and abs(_log_fraction(cand) - beta) <= budget:
            return cand
        den *= 2
    return exact


def rationalize(m, tol, radius=1.0, q_max=Q_MAX):
    """Approximate ``m`` by a model with T = 1/p and rational exponents and coefficients.

    The achieved ``kappa`` bounds |m(x) - rationalized(x)| for ||x|| <= radius; it
    is the sum of |T - 1/p| * max(log K+, log K-) and the perturbation bound
    max_k ||d alpha_k|| R + max_k |d beta_k| of each component.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    log_k = max(math.log(m.plus.K), math.log(m.minus.K))
    p, t_err = _choose_p(m.T, log_k, tol / 2)
    if p is None:
        raise RationalizationError(
            f"no T = 1/p lies close enough to T = {m.T}; best achievable kappa is {t_err:.3g}",
            best_kappa=t_err)
    rest = tol - t_err
    alpha_rows = [m.plus.alphas, m.minus.alphas]
    q = _choose_q(alpha_rows, radius, rest / 4, q_max)
    if q is None:
        best = t_err + 2 * radius * max(_alpha_error(a, q_max) for a in alpha_rows)
        raise RationalizationError(
            f"exponents need a denominator above {q_max}; best achievable kappa is {best:.3g}",
            best_kappa=best)
    parts = []
    kappa = t_err
    for comp in (m.plus, m.minus):
        nums = np.rint(comp.alphas * q).astype(np.int64)
        a_err = np.linalg.norm(nums / q - comp.alphas, axis=1).max() * radius
        coeffs = tuple(_rational_coeff(b, rest / 2 - a_err) for b in comp.betas)
        b_err = max(abs(_log_fraction(c) - b) for c, b in zip(coeffs, comp.betas))
        kappa += a_err + b_err
        nums.setflags(write=False)
        parts.append(RationalGpos(coeffs, nums))
    if kappa > tol:
        raise RationalizationError(f"achieved kappa {kappa:.3g} exceeds tol {tol:.3g}", best_kappa=kappa)
    return RationalDlse(p, q, parts[0], parts[1], kappa=float(kappa), radius=float(radius))


# --- subtraction-free expressions ------------------------------------------

class SfExpr:
    """Node of a subtraction-free expression tree."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(SfExpr):
    value: Fraction

    def __post_init__(self):
        v = Fraction(self.value)
        if v <= 0:
            raise DataError("constants in subtraction-free expressions must be positive")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Var(SfExpr):
    index: int


@dataclass(frozen=True)
class Add(SfExpr):
    left: SfExpr
    right: SfExpr


@dataclass(frozen=True)
class Mul(SfExpr):
    left: SfExpr
    right: SfExpr


@dataclass(frozen=True)
class Div(SfExpr):
    left: SfExpr
    right: SfExpr


@dataclass(frozen=True)
class Pow(SfExpr):
    """``base`` multiplied by itself ``k`` times (k >= 2); shorthand for nested Mul."""

    base: SfExpr
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DataError("powers must be positive integers")


def _balanced(op, items):
    while len(items) > 1:
        nxt = [op(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def _power(i, e):
    return Var(i) if e == 1 else Pow(Var(i), int(e))


def _monomial(coeff, exps):
    ups = [_power(i, e) for i, e in enumerate(exps) if e > 0]
    downs = [_power(i, -e) for i, e in enumerate(exps) if e < 0]
    factors = ([] if coeff == 1 and ups else [Const(coeff)]) + ups
    top = _balanced(Mul, factors) if factors else Const(1)
    if downs:
        return Div(top, _balanced(Mul, downs))
    return top


def _gpos_sum(part, p):
    terms = [_monomial(c ** p, [int(v) * p for v in row]) for c, row in zip(part.coeffs, part.numerators)]
    return _balanced(Add, terms)


def emit_sf(r):
    """Return ``(E, p, q)`` with psi_T(x) / psi'_T(x) = E(x^(1/q))^(1/p)."""
    num = _gpos_sum(r.plus, r.p)
    den = _gpos_sum(r.minus, r.p)
    expr = num if den == Const(1) else Div(num, den)
    return expr, r.p, r.q


def walk(e):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(_children(node))


def is_subtraction_free(e):
    for node in walk(e):
        if not isinstance(node, (Const, Var, Add, Mul, Div, Pow)):
            return False
        if isinstance(node, Const) and not node.value > 0:
            return False
    return True


def _children(node):
    if isinstance(node, (Add, Mul, Div)):
        return (node.left, node.right)
    if isinstance(node, Pow):
        return (node.base,)
    return ()


def fold(e, visit):
    """Bottom-up evaluation without recursion: ``visit(node, child_values)``.

    Parsed expanded products form long left-leaning chains, too deep for
    the interpreter stack.
    """
    out = []
    stack = [(e, False)]
    while stack:
        node, ready = stack.pop()
        kids = _children(node)
        if ready or not kids:
            args = out[len(out) - len(kids):] if kids else []
            if kids:
                del out[len(out) - len(kids):]
            out.append(visit(node, args))
        else:
            stack.append((node, True))
            stack.extend((k, False) for k in reversed(kids))
    return out[0]


def _log_eval(e, logy):
    def visit(node, args):
        if isinstance(node, Const):
            return np.full(logy.shape[:-1], _log_fraction(node.value))
        if isinstance(node, Var):
            return logy[..., node.index]
        if isinstance(node, Pow):
            return node.k * args[0]
        a, b = args
        if isinstance(node, Add):
            return np.logaddexp(a, b)
        return a + b if isinstance(node, Mul) else a - b

    return fold(e, visit)


def _exact_eval(e, y):
    def visit(node, args):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            return y[node.index]
        if isinstance(node, Pow):
            return args[0] ** node.k
        a, b = args
        if isinstance(node, Add):
            return a + b
        if isinstance(node, Mul):
            return a * b
        assert b > 0, "division by a non-positive value in a subtraction-free expression"
        return a / b

    return fold(e, visit)


def eval_sf(e, p, q, x, exact=False):
    """E(x^(1/q))^(1/p) for positive x.

    Floating-point evaluation runs through logarithms of every node, which
    keeps large integer powers finite.  ``exact=True`` (q == 1 and rational
    x only) evaluates E in rationals and returns a Fraction when p == 1.
    """
    if exact:
        if q != 1:
            raise ValueError("exact evaluation needs q == 1")
        y = [Fraction(v) for v in x]
        if any(v <= 0 for v in y):
            raise DataError("subtraction-free expressions take positive inputs")
        val = _exact_eval(e, y)
        if p == 1:
            return val
        return math.exp(_log_fraction(val) / p)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DataError("subtraction-free expressions take positive inputs")
    logy = np.log(np.atleast_1d(x)) / q
    return np.exp(_log_eval(e, logy) / p)


def format_sf(e, caret=True):
    """Fully parenthesized infix form; ``caret=False`` expands powers into products."""
    def visit(node, args):
        if isinstance(node, Const):
            v = node.value
            return str(v.numerator) if v.denominator == 1 else f"({v.numerator}/{v.denominator})"
        if isinstance(node, Var):
            return f"y{node.index + 1}"
        if isinstance(node, Pow):
            return f"{args[0]}^{node.k}" if caret else "(" + "*".join([args[0]] * node.k) + ")"
        sym = {Add: " + ", Mul: "*", Div: " / "}[type(node)]
        return f"({args[0]}{sym}{args[1]})"

    return fold(e, visit)


_TOKEN = re.compile(r"\s*(?:(\((\d+)/(\d+)\))|(\d+(?:\.\d*)?(?:[eE][+]?\d+)?)|([xy])(\d+)|(.))")


def _tokens(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        pos = m.end()
        if m.group(1):
            out.append(("const", Fraction(int(m.group(2)), int(m.group(3)))))
        elif m.group(4):
            out.append(("const", Fraction(m.group(4))))
        elif m.group(5):
            out.append(("var", int(m.group(6)) - 1))
        elif m.group(7):
            ch = m.group(7)
            if ch == "-":
                raise DataError("subtraction is not allowed in a subtraction-free expression", pos=pos)
            if ch not in "+*/^()":
                raise DataError(f"unexpected character {ch!r}", pos=pos)
            out.append(("op", ch))
    return out


def parse_sf(text):
    """Inverse of :func:`format_sf` (either power style)."""
    toks = _tokens(text)
    i = 0

    def peek():
        return toks[i] if i < len(toks) else (None, None)

    def take(kind=None, val=None):
        nonlocal i
        tok = peek()
        if tok[0] is None or (kind and tok[0] != kind) or (val and tok[1] != val):
            raise DataError(f"unexpected token {tok[1]!r} at position {i}")
        i += 1
        return tok

    def expr():
        node = term()
        while peek() == ("op", "+"):
            take()
            node = Add(node, term())
        return node

    def term():
        node = factor()
        while peek() in (("op", "*"), ("op", "/")):
            op = take()[1]
            rhs = factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor():
        node = atom()
        while peek() == ("op", "^"):
            take()
            k = take("const")[1]
            if k.denominator != 1:
                raise DataError("powers must be integers")
            node = Pow(node, int(k))
        return node

    def atom():
        kind, val = peek()
        if kind == "const":
            take()
            return Const(val)
        if kind == "var":
            take()
            if val < 0:
                raise DataError("variables are numbered from 1")
            return Var(val)
        take("op", "(")
        node = expr()
        take("op", ")")
        return node

    node = expr()
    if i != len(toks):
        raise DataError(f"trailing input at token {i}")
    return node

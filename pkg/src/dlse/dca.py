"""
Difference-of-convex minimization of DLSE_T surrogates (DLSEA).

Each outer step linearizes the concave part -h_T at the current iterate,
v = grad h_T(chi), and solves the convex subproblem

    chi+ = argmin_{x in S} g_T(x) - <x, v>

with projected gradient descent.  Iteration stops once the relative step
||chi+ - chi|| / (1 + ||chi||) drops below ``tol``.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import core
from .errors import DataError, DimensionError, NumericalError

log = logging.getLogger(__name__)

ARMIJO = 1e-4


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.array(self.lower, dtype=float))
        hi = np.atleast_1d(np.array(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DataError("box bounds must be finite")
        if np.any(lo > hi):
            raise DataError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self):
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def violation(self, x):
        return float(max(np.max(self.lower - x), np.max(x - self.upper), 0.0))

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng, size=None):
        shape = (self.n,) if size is None else (size, self.n)
        return rng.uniform(self.lower, self.upper, size=shape)

    def vertices(self):
        grids = np.meshgrid(*np.stack([self.lower, self.upper], axis=1), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class ScaledSimplex:
    """{x >= 0 : sum(x) = total} in dimension n."""

    total: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.total) and self.total > 0):
            raise DataError("simplex total must be positive")
        if self.n < 1:
            raise DataError("simplex dimension must be positive")

    def project(self, x):
        # sort-and-threshold: find theta with sum(max(x - theta, 0)) = total
        x = np.asarray(x, dtype=float)
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - self.total
        idx = np.arange(1, x.size + 1)
        rho = np.nonzero(u - css / idx > 0)[0][-1]
        theta = css[rho] / (rho + 1)
        return np.maximum(x - theta, 0.0)

    def violation(self, x):
        x = np.asarray(x, dtype=float)
        return float(max(abs(np.sum(x) - self.total), np.max(-x), 0.0))

    def center(self):
        return np.full(self.n, self.total / self.n)

    def sample(self, rng, size=None):
        shape = (self.n,) if size is None else (size, self.n)
        e = rng.exponential(size=shape)
        return self.total * e / e.sum(axis=-1, keepdims=True)

    def vertices(self):
        return self.total * np.eye(self.n)


def project(S, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (S.n,):
        raise DimensionError(f"expected a point of dimension {S.n}", got=x.shape)
    return S.project(x)


@dataclass(frozen=True)
class DcaConfig:
    tol: float = 1e-6
    max_outer: int = 200
    inner_tol: float = 1e-9
    inner_max_iter: int = 5000
    x0: Optional[np.ndarray] = None  # None picks the set's center

    def __post_init__(self):
        if not (self.tol > 0 and self.inner_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.inner_max_iter < 1:
            raise ValueError("iteration limits must be positive")


class InnerResult(NamedTuple):
    x: np.ndarray
    iterations: int
    converged: bool
    pg_norm: float


@dataclass
class DcaTrace:
    iterates: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    inner_converged: list = field(default_factory=list)
    reason: str = ""

    @property
    def outer_iterations(self):
        return len(self.iterates) - 1

    def rows(self):
        for k, (obj, x) in enumerate(zip(self.objectives, self.iterates)):
            if k == 0:
                yield {"iteration": 0, "objective": obj, "step_norm": "", "inner_iters": 0}
            else:
                yield {"iteration": k, "objective": obj, "step_norm": self.steps[k - 1],
                       "inner_iters": self.inner_iters[k - 1]}

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["iteration", "objective", "step_norm", "inner_iters"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def to_dict(self):
        return {
            "iterates": [x.tolist() for x in self.iterates],
            "objectives": list(self.objectives),
            "steps": list(self.steps),
            "inner_iters": list(self.inner_iters),
            "inner_converged": list(self.inner_converged),
            "reason": self.reason,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def linearization_point(h, chi):
    return core.grad_x_lse(h, chi)


def solve_inner(g, v, S, cfg, x0):
    """Minimize g_T(x) - <x, v> over S by projected gradient with Armijo backtracking.

    The step starts from a Barzilai-Borwein estimate and is halved until
    the Armijo condition holds.  Near the optimum, where objective
    differences fall below rounding, a step is also accepted if the
    gradient at the trial point certifies descent by convexity.
    """
    v = np.asarray(v, dtype=float)
    x = S.project(np.asarray(x0, dtype=float))

    def F(z):
        return core.eval_lse(g, z) - z @ v

    def G(z):
        return core.grad_x_lse(g, z) - v

    fx, gx = F(x), G(x)
    t = 1.0
    pg = np.linalg.norm(x - S.project(x - gx))
    for it in range(cfg.inner_max_iter):
        if pg <= cfg.inner_tol:
            return InnerResult(x, it, True, pg)
        while True:
            xn = S.project(x - t * gx)
            d = xn - x
            fn = F(xn)
            if fn <= fx + ARMIJO * (gx @ d):
                gn = G(xn)
                break
            gn = G(xn)
            if gn @ d <= 0 and fn <= fx + 1e-14 * (1 + abs(fx)):
                break
            t *= 0.5
            if t < 1e-30:
                log.debug("inner line search stalled at pg=%.3e", pg)
                return InnerResult(x, it, False, pg)
        s, yv = d, gn - gx
        x, fx, gx = xn, fn, gn
        sy = s @ yv
        t = float(np.clip((s @ s) / sy, 1e-12, 1e12)) if sy > 0 else min(2 * t, 1e12)
        pg = np.linalg.norm(x - S.project(x - gx))
    return InnerResult(x, cfg.inner_max_iter, pg <= cfg.inner_tol, pg)


def _start(S, cfg):
    if cfg.x0 is None:
        return S.center()
    x0 = np.atleast_1d(np.asarray(cfg.x0, dtype=float))
    if x0.shape != (S.n,):
        raise DimensionError(f"x0 must have dimension {S.n}", got=x0.shape)
    if S.violation(x0) > 1e-9:
        raise DataError("initial point is not feasible", violation=S.violation(x0))
    return x0


def dlsea(m, S, cfg=DcaConfig()):
    """Run DLSEA on ``m`` over ``S``; returns ``(x_star, trace)``."""
    if m.n != S.n:
        raise DimensionError("model and feasible set dimensions differ", n_model=m.n, n_set=S.n)
    chi = _start(S, cfg)
    trace = DcaTrace()

    def objective(x):
        val = core.eval_dlse(m, x)
        if not np.isfinite(val):
            trace.reason = "non_finite"
            raise NumericalError("objective is not finite", trace=trace)
        return val

    trace.iterates.append(chi)
    trace.objectives.append(objective(chi))
    trace.reason = "max_outer"
    for k in range(cfg.max_outer):
        v = linearization_point(m.minus, chi)
        inner = solve_inner(m.plus, v, S, cfg, chi)
        nxt = inner.x
        step = float(np.linalg.norm(nxt - chi) / (1 + np.linalg.norm(chi)))
        trace.iterates.append(nxt)
        trace.objectives.append(objective(nxt))
        trace.steps.append(step)
        trace.inner_iters.append(inner.iterations)
        trace.inner_converged.append(inner.converged)
        chi = nxt
        if step < cfg.tol:
            trace.reason = "tol"
            break
    log.debug("dlsea: %s after %d outer iterations", trace.reason, trace.outer_iterations)
    return chi, trace


def start_points(S, cfg, starts, seed, m=None, screen=1):
    """Feasible starting points, deterministic given ``seed``.

    The first is ``cfg.x0`` (or the set's center).  The others are uniform
    draws; with ``screen > 1`` they are the ``starts - 1`` draws of lowest
    model value among ``screen * (starts - 1)`` candidates.
    """
    pts = [_start(S, cfg)]
    if starts > 1:
        rng = np.random.default_rng(seed)
        if screen > 1 and m is not None:
            cand = S.sample(rng, screen * (starts - 1))
            keep = np.argsort(core.eval_dlse(m, cand), kind="stable")[:starts - 1]
            pts.extend(cand[np.sort(keep)])
        else:
            pts.extend(S.sample(rng, starts - 1))
    return pts


def multistart(m, S, cfg=DcaConfig(), starts=10, seed=0, screen=1):
    """Run DLSEA from several feasible starts and keep the lowest objective.

    Ties go to the earliest start.  See :func:`start_points` for ``screen``.
    """
    if starts < 1 or screen < 1:
        raise ValueError("starts and screen must be at least 1")
    best = None
    for x0 in start_points(S, cfg, starts, seed, m, screen):
        run_cfg = DcaConfig(cfg.tol, cfg.max_outer, cfg.inner_tol, cfg.inner_max_iter, x0)
        x, trace = dlsea(m, S, run_cfg)
        if best is None or trace.objectives[-1] < best[1].objectives[-1]:
            best = (x, trace)
    return best

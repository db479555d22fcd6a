"""
DLSE smoothing of one-dimensional continuous piecewise-affine functions.

A PWA function is written as ``a*x + b + sum_i jump_i * max(0, x - bp_i)``.
Splitting the jumps by sign gives two convex max-affine functions (each
including the zero branch of its hinges), and replacing each max by a
temperature-T log-sum-exp yields a DLSE_T model with a certified uniform
error bound.
"""

from dataclasses import dataclass

import numpy as np

from .core import DlseModel, LseParams
from .errors import DataError


@dataclass(frozen=True, eq=False)
class PwaSpec:
    a: float = 0.0
    b: float = 0.0
    breakpoints: np.ndarray = ()
    jumps: np.ndarray = ()

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).reshape(-1)
        jp = np.array(self.jumps, dtype=float).reshape(-1)
        if bp.shape != jp.shape:
            raise DataError("need one jump per breakpoint", breakpoints=bp.size, jumps=jp.size)
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(jp))
                and np.isfinite(self.a) and np.isfinite(self.b)):
            raise DataError("PWA spec must be finite")
        if np.any(np.diff(bp) <= 0):
            raise DataError("breakpoints must be strictly increasing")
        if np.any(jp == 0):
            raise DataError("jumps must be nonzero")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "jumps", jp)

    @property
    def K(self):
        return self.breakpoints.size

    def to_dict(self):
        return {"a": self.a, "b": self.b,
                "breakpoints": self.breakpoints.tolist(), "jumps": self.jumps.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["a"], d["b"], d["breakpoints"], d["jumps"])
        except KeyError as e:
            raise DataError(f"PWA spec is missing field {e}") from None


def eval_pwa(s, x):
    x = np.asarray(x, dtype=float)
    hinge = np.maximum(0.0, x[..., None] - s.breakpoints)
    return s.a * x + s.b + hinge @ s.jumps


def max_affine_pieces(s, sign):
    """Slopes and intercepts of the max-affine form of the hinges with jumps of ``sign``.

    Row 0 is the zero branch; row i adds up |jump_j| (x - bp_j) over the
    selected hinges with j <= i.
    """
    sel = np.sign(s.jumps) == sign
    mag = np.abs(s.jumps[sel])
    slopes = np.concatenate([[0.0], np.cumsum(mag)])
    offsets = np.concatenate([[0.0], np.cumsum(mag * s.breakpoints[sel])])
    return slopes, -offsets


def pwa_to_dlse(s, T):
    """Smooth ``s`` at temperature ``T``.

    Returns ``(model, err_plus, err_minus)`` with

        eval_dlse(model, x) - err_plus <= eval_pwa(s, x) <= eval_dlse(model, x) + err_minus

    for every real x, where ``err_plus = T log(1 + #positive jumps)`` and
    ``err_minus = T log(1 + #negative jumps)``.  The affine part a*x + b is
    added to every plus term, which is exact.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    comps = []
    errs = []
    for sign in (1, -1):
        slopes, icepts = max_affine_pieces(s, sign)
        if sign == 1:
            slopes = slopes + s.a
            icepts = icepts + s.b
        comps.append(LseParams(T, slopes[:, None], icepts))
        errs.append(T * np.log(slopes.size))
    return DlseModel(*comps), float(errs[0]), float(errs[1])

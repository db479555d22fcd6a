"""
Log-sum-exp building blocks.

An LSE_T component is

    f_T(x) = T * log(sum_k exp((<alpha_k, x> + beta_k) / T))

and a DLSE_T model is the difference g_T - h_T of two such components
sharing the same temperature.  Everything here evaluates in max-shifted
form, so small temperatures never overflow.

All public functions accept either a single point of shape ``(n,)`` (and
return a scalar / ``(n,)`` gradient) or a batch of shape ``(m, n)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteError, NumericalError

# largest |score| accepted; beyond this the shifted sum loses all precision
MAX_SCORE = 1e8


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LseParams:
    """One LSE_T component: temperature, exponent rows ``alphas`` (K, n), offsets ``betas`` (K,)."""

    T: float
    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float)
        if alphas.ndim == 1:
            alphas = alphas[:, None]
        betas = np.array(self.betas, dtype=float).reshape(-1)
        T = float(self.T)
        if alphas.ndim != 2 or alphas.shape[0] < 1 or alphas.shape[1] < 1:
            raise DimensionError("alphas must be a non-empty (K, n) array", shape=alphas.shape)
        if betas.shape[0] != alphas.shape[0]:
            raise DimensionError("need one beta per alpha row", K=alphas.shape[0], n_betas=betas.shape[0])
        if not np.isfinite(T) or T <= 0:
            raise NonFiniteError("temperature must be positive and finite", T=T)
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(betas))):
            raise NonFiniteError("parameters must be finite")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "alphas", _frozen(alphas))
        object.__setattr__(self, "betas", _frozen(betas))

    @property
    def K(self):
        return self.alphas.shape[0]

    @property
    def n(self):
        return self.alphas.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LseParams):
            return NotImplemented
        return (self.T == other.T and np.array_equal(self.alphas, other.alphas)
                and np.array_equal(self.betas, other.betas))

    def permuted(self, order):
        order = np.asarray(order)
        return LseParams(self.T, self.alphas[order], self.betas[order])


@dataclass(frozen=True, eq=False)
class DlseModel:
    """The surrogate ``plus - minus``; the two components may have different K."""

    plus: LseParams
    minus: LseParams

    def __post_init__(self):
        if self.plus.T != self.minus.T:
            raise DimensionError("components must share T", T_plus=self.plus.T, T_minus=self.minus.T)
        if self.plus.n != self.minus.n:
            raise DimensionError("components must share input dimension",
                                 n_plus=self.plus.n, n_minus=self.minus.n)

    @property
    def T(self):
        return self.plus.T

    @property
    def n(self):
        return self.plus.n

    def __eq__(self, other):
        if not isinstance(other, DlseModel):
            return NotImplemented
        return self.plus == other.plus and self.minus == other.minus


def _points(p, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = np.atleast_2d(x.reshape(1, -1) if x.ndim == 0 else x)
    if X.ndim != 2 or X.shape[1] != p.n:
        raise DimensionError(f"expected points of dimension {p.n}", got=x.shape, n=p.n)
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("input point contains non-finite values")
    return X, single


def scores(p, X):
    """Scaled pre-activations s_k = (<alpha_k, x> + beta_k) / T, shape (m, K)."""
    S = (X @ p.alphas.T + p.betas) / p.T
    if not np.all(np.isfinite(S)) or np.max(np.abs(S)) > MAX_SCORE:
        raise NumericalError("scores out of representable range", max_abs=float(np.max(np.abs(S))))
    return S


def _shifted(S):
    top = S.max(axis=1, keepdims=True)
    return top, np.exp(S - top)


def eval_lse(p, x):
    X, single = _points(p, x)
    top, E = _shifted(scores(p, X))
    # sorting makes the sum independent of the term order
    total = np.sort(E, axis=1).sum(axis=1)
    val = p.T * (top[:, 0] + np.log(total))
    return float(val[0]) if single else val


def softmax_weights(p, x):
    """Max-shifted softmax weights w_k of the terms, shape (K,) or (m, K)."""
    X, single = _points(p, x)
    _, E = _shifted(scores(p, X))
    W = E / E.sum(axis=1, keepdims=True)
    return W[0] if single else W


def grad_x_lse(p, x):
    W = softmax_weights(p, x)
    return W @ p.alphas


def eval_dlse(m, x):
    return eval_lse(m.plus, x) - eval_lse(m.minus, x)


def grad_x_dlse(m, x):
    return grad_x_lse(m.plus, x) - grad_x_lse(m.minus, x)


def rescale_to_unit_T(p):
    """Return the T=1 parameters with f_T(x) == T * f_1(x / T)."""
    return LseParams(1.0, p.alphas, p.betas / p.T)


def rescale_from_unit_T(p, T):
    """Inverse of :func:`rescale_to_unit_T` for a recorded temperature."""
    if p.T != 1.0:
        raise ValueError("expected unit-temperature parameters")
    return LseParams(T, p.alphas, p.betas * T)


def eval_tropical_limit(p, x):
    """max_k(<alpha_k, x> + beta_k), the T -> 0 limit of f_T."""
    X, single = _points(p, x)
    val = (X @ p.alphas.T + p.betas).max(axis=1)
    return float(val[0]) if single else val


def kappa(p, q, radius=1.0):
    """Perturbation bound max_k ||alpha_k - gamma_k|| R + max_k |beta_k - delta_k|.

    ``|f_p(x) - f_q(x)|`` never exceeds it for ``||x|| <= radius``.
    """
    if p.alphas.shape != q.alphas.shape:
        raise DimensionError("parameter sets must have the same shape")
    da = np.linalg.norm(p.alphas - q.alphas, axis=1).max()
    db = np.abs(p.betas - q.betas).max()
    return float(da * radius + db)

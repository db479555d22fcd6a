"""
Least-squares fitting of DLSE_T models.

The fit is a damped Gauss-Newton (Levenberg-Marquardt) iteration on the
mean squared error, with the residual Jacobian assembled from the closed
form parameter gradients: for the plus component the gradient with respect
to ``alpha_i`` is ``w_i(x) * x`` and with respect to ``beta_i`` it is
``w_i(x)``, where ``w`` are the softmax weights of the terms; the minus
component contributes the same blocks with a minus sign.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import core
from .core import DlseModel, LseParams
from .errors import DataError, DimensionError, DlseError, NonFiniteError, NumericalError

log = logging.getLogger(__name__)

MAX_DAMPING = 1e12


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.array(self.points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.targets, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("points must be a non-empty (m, n) array", shape=X.shape)
        if y.shape[0] != X.shape[0]:
            raise DataError("one target per point required", m=X.shape[0], targets=y.shape[0])
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "targets", y)

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def n(self):
        return self.points.shape[1]

    def subset(self, idx):
        return Dataset(self.points[idx], self.targets[idx])


@dataclass(frozen=True)
class TrainConfig:
    K: int = 10
    T: Optional[float] = None  # None means 2 / (max y - min y)
    max_epochs: int = 3000
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.3
    tol_loss: float = 1e-12
    holdout_fraction: float = 0.0
    rng_seed: int = 0
    train_T: bool = False
    restarts: int = 6
    damping_ridge: float = 1e-4
    anneal_start: float = 0.2
    anneal_factor: float = 0.3
    anneal_epochs: int = 200

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive (or None for automatic)")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be nonnegative")
        if not (self.damping_init > 0 and self.damping_up > 1 and 0 < self.damping_down < 1):
            raise ValueError("need damping_init > 0, damping_up > 1, 0 < damping_down < 1")
        if not self.tol_loss > 0:
            raise ValueError("tol_loss must be positive")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.damping_ridge < 0 or self.anneal_start < 0:
            raise ValueError("damping_ridge and anneal_start must be nonnegative")
        if not 0 < self.anneal_factor < 1 or self.anneal_epochs < 0:
            raise ValueError("need 0 < anneal_factor < 1 and anneal_epochs >= 0")


@dataclass
class TrainReport:
    model: DlseModel
    initial_loss: float = float("nan")
    losses: list = field(default_factory=list)
    holdout_loss: Optional[float] = None
    epochs: int = 0
    reason: str = ""
    anneal_epochs: int = 0

    @property
    def train_loss(self):
        return self.losses[-1] if self.losses else self.initial_loss

    def summary(self):
        return {
            "train_mse": self.train_loss,
            "holdout_mse": self.holdout_loss,
            "epochs": self.epochs,
            "reason": self.reason,
            "T": self.model.T,
        }


class ParamGradients(NamedTuple):
    """Derivatives of d_T(x) with respect to each parameter block."""

    alphas: np.ndarray
    betas: np.ndarray
    gammas: np.ndarray
    deltas: np.ndarray


def default_temperature(d):
    """Inverse mid output range, 2 / |max y - min y|."""
    if d.m < 2:
        raise DataError("need at least two targets to choose T; pass T explicitly")
    spread = float(np.max(d.targets) - np.min(d.targets))
    if spread == 0:
        raise DataError("targets are constant; pass T explicitly")
    return 2.0 / abs(spread)


def param_gradients(m, x):
    x = np.asarray(x, dtype=float)
    w = core.softmax_weights(m.plus, x)
    v = core.softmax_weights(m.minus, x)
    if w.ndim != 1:
        raise DimensionError("param_gradients takes a single point; use jacobian for batches")
    return ParamGradients(np.outer(w, x), w, -np.outer(v, x), -v)


# parameter vector layout: [plus alphas, plus betas, minus alphas, minus betas]

def pack(m):
    return np.concatenate([m.plus.alphas.ravel(), m.plus.betas,
                           m.minus.alphas.ravel(), m.minus.betas])


def unpack(theta, T, K_plus, K_minus, n):
    theta = np.asarray(theta, dtype=float)
    i = 0
    parts = []
    for K in (K_plus, K_minus):
        a = theta[i:i + K * n].reshape(K, n)
        i += K * n
        b = theta[i:i + K]
        i += K
        parts.append(LseParams(T, a, b))
    if i != theta.size:
        raise DimensionError("parameter vector has the wrong length", expected=i, got=theta.size)
    return DlseModel(*parts)


def jacobian(m, X):
    """Rows d d_T(x_i) / d theta in :func:`pack` order, shape (m, P)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = core.softmax_weights(m.plus, X)
    V = core.softmax_weights(m.minus, X)
    rows = X.shape[0]
    return np.hstack([
        (W[:, :, None] * X[:, None, :]).reshape(rows, -1), W,
        -(V[:, :, None] * X[:, None, :]).reshape(rows, -1), -V,
    ])


def _temperature_column(m, X):
    h = 1e-6 * m.T
    up = unpack(pack(m), m.T + h, m.plus.K, m.minus.K, m.n)
    dn = unpack(pack(m), m.T - h, m.plus.K, m.minus.K, m.n)
    return ((core.eval_dlse(up, X) - core.eval_dlse(dn, X)) / (2 * h))[:, None]


def init_params(d, cfg, restart=0):
    """Random start whose terms all have zero pre-activation at the data centroid.

    Restart 0 draws from ``cfg.rng_seed`` itself; later restarts from the
    seed pair ``(rng_seed, restart)``.
    """
    T = cfg.T if cfg.T is not None else default_temperature(d)
    in_spread = float(np.max(np.ptp(d.points, axis=0)))
    if in_spread == 0:
        raise DataError("all input points coincide; cannot scale initial weights")
    out_spread = float(np.ptp(d.targets))
    s = out_spread / in_spread if out_spread > 0 else 1.0 / in_spread
    rng = np.random.default_rng(cfg.rng_seed if restart == 0 else [cfg.rng_seed, restart])
    centroid = d.points.mean(axis=0)
    comps = []
    for _ in range(2):
        a = rng.uniform(-s, s, size=(cfg.K, d.n))
        comps.append(LseParams(T, a, -a @ centroid))
    return DlseModel(*comps)


def _split(d, cfg):
    n_hold = int(np.floor(cfg.holdout_fraction * d.m))
    if n_hold == 0:
        return d, None
    if d.m - n_hold < 1:
        raise DataError("holdout leaves no training points")
    perm = np.random.default_rng(cfg.rng_seed).permutation(d.m)
    return d.subset(np.sort(perm[n_hold:])), d.subset(np.sort(perm[:n_hold]))


def mse(m, d):
    r = core.eval_dlse(m, d.points) - d.targets
    return float(np.mean(r * r))


def fit(d, cfg, init=None):
    """Fit a DLSE_T model to ``d`` by Levenberg-Marquardt.

    With ``cfg.restarts > 1`` the iteration is rerun from that many seeded
    initial points (ignored when ``init`` is given) and the report with the
    lowest loss is returned, measured on the holdout split if there is one
    and on the training data otherwise.  Random starts are first annealed
    from a high temperature (see :func:`temperature_schedule`).
    """
    train, hold = _split(d, cfg)
    if init is not None:
        inits = [init]
    else:
        inits = [init_params(train, cfg, restart=r) for r in range(cfg.restarts)]
    best = None
    for r, model in enumerate(inits):
        # a caller-supplied start is taken as already warm
        warm, spent = (model, 0) if init is not None else _anneal(train, model, cfg)
        report = _levenberg_marquardt(train, warm, cfg, cfg.max_epochs)
        report.anneal_epochs = spent
        if hold is not None:
            report.holdout_loss = mse(report.model, hold)
        log.info("restart %d: %s after %d epochs, mse=%.3e, holdout=%s", r, report.reason,
                 report.epochs, report.train_loss, report.holdout_loss)
        if best is None or _score(report) < _score(best):
            best = report
        if best.train_loss <= cfg.tol_loss:
            break
    return best


def _score(report):
    # restarts are ranked on held-out data when there is any
    return report.train_loss if report.holdout_loss is None else report.holdout_loss


def temperature_schedule(d, T, cfg):
    """Temperatures visited before the target ``T``, largest first.

    Empty unless ``T`` is below ``anneal_start`` times the output spread;
    small temperatures make the softmax weights saturate from the first
    step, and starting warm avoids the dead terms that follow.
    """
    temps = []
    t = cfg.anneal_start * float(np.ptp(d.targets))
    while t > T:
        temps.append(t)
        t *= cfg.anneal_factor
    return temps


def _anneal(train, model, cfg):
    spent = 0
    cur = model
    for t in temperature_schedule(train, model.T, cfg):
        stage = unpack(pack(cur), t, cur.plus.K, cur.minus.K, cur.n)
        rep = _levenberg_marquardt(train, stage, cfg, cfg.anneal_epochs)
        spent += rep.epochs
        cur = rep.model
    if spent:
        cur = unpack(pack(cur), model.T, cur.plus.K, cur.minus.K, cur.n)
    return cur, spent


def _forward(theta, T, Kp, Km, n, X):
    """Predictions and softmax weights straight from a packed vector.

    Same arithmetic as :func:`core.eval_dlse` without building parameter
    objects, which dominates the cost on small datasets.  Returns None when
    the scores leave the accepted range.
    """
    out = []
    i = 0
    for K in (Kp, Km):
        A = theta[i:i + K * n].reshape(K, n)
        b = theta[i + K * n:i + K * n + K]
        i += K * n + K
        S = (X @ A.T + b) / T
        top = S.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(top)) or np.max(np.abs(S)) > core.MAX_SCORE:
            return None
        E = np.exp(S - top)
        total = E.sum(axis=1, keepdims=True)
        out.append((T * (top[:, 0] + np.log(total[:, 0])), E / total))
    (fp, W), (fm, V) = out
    return fp - fm, W, V


def _jacobian_from_weights(X, W, V):
    rows = X.shape[0]
    return np.hstack([(W[:, :, None] * X[:, None, :]).reshape(rows, -1), W,
                      -(V[:, :, None] * X[:, None, :]).reshape(rows, -1), -V])


def _levenberg_marquardt(train, model, cfg, max_epochs):
    if model.n != train.n:
        raise DimensionError("initial model dimension does not match data", n_model=model.n, n_data=train.n)
    Kp, Km, n = model.plus.K, model.minus.K, model.n
    X, y = train.points, train.targets
    theta, T = pack(model), model.T

    fwd = _forward(theta, T, Kp, Km, n, X)
    if fwd is None:
        raise NumericalError("initial scores out of representable range")
    r, W, V = fwd[0] - y, fwd[1], fwd[2]
    loss = float(np.mean(r * r))
    if not np.isfinite(loss):
        raise NumericalError("initial loss is not finite")
    report = TrainReport(model=model, initial_loss=loss)
    lam = cfg.damping_init
    reason = "max_epochs"
    for epoch in range(max_epochs):
        if loss <= cfg.tol_loss:
            reason = "tol_loss"
            break
        J = _jacobian_from_weights(X, W, V)
        if cfg.train_T:
            J = np.hstack([J, _temperature_column(unpack(theta, T, Kp, Km, n), X)])
        g = J.T @ r
        H = J.T @ J
        # Marquardt scaling plus a small isotropic share, which stops steps
        # drifting along directions the data cannot see
        dH = np.diag(H)
        D = dH + cfg.damping_ridge * np.mean(dH) + 1e-12
        accepted = False
        while lam <= MAX_DAMPING:
            try:
                step = np.linalg.solve(H + np.diag(lam * D), -g)
            except np.linalg.LinAlgError:
                lam *= cfg.damping_up
                continue
            t_theta = theta + (step[:-1] if cfg.train_T else step)
            t_T = T + step[-1] if cfg.train_T else T
            fwd = _forward(t_theta, t_T, Kp, Km, n, X) if t_T > 0 else None
            t_loss = np.inf
            if fwd is not None:
                t_r = fwd[0] - y
                t_loss = float(np.mean(t_r * t_r))
            if t_loss < loss:
                theta, T, r, loss = t_theta, t_T, t_r, t_loss
                W, V = fwd[1], fwd[2]
                lam = max(lam * cfg.damping_down, 1e-15)
                accepted = True
                break
            lam *= cfg.damping_up
        report.losses.append(loss)
        report.epochs = epoch + 1
        if not accepted:
            reason = "damping_limit"
            break
    else:
        if loss <= cfg.tol_loss:
            reason = "tol_loss"
    report.model = unpack(theta, T, Kp, Km, n)
    report.reason = reason
    return report

"""
Self-check suite run by ``dlse check``.

Each property is tested on seeded random instances and reported with its
instance count and the worst deviation seen.  Functions are looked up
through their modules at call time, so a patched implementation is what
gets checked.
"""

from dataclasses import dataclass

import numpy as np

from . import core, dca, gpos, pwa, training
from .core import DlseModel, LseParams


@dataclass(frozen=True)
class CheckResult:
    name: str
    instances: int
    worst: float
    limit: float

    @property
    def passed(self):
        return bool(self.worst <= self.limit)

    def to_dict(self):
        return {"name": self.name, "instances": self.instances, "worst": self.worst,
                "limit": self.limit, "passed": self.passed}


def random_lse(rng, n, K, T):
    return LseParams(T, rng.normal(size=(K, n)), rng.normal(size=K))


def random_model(rng, n=None, T=None, K_max=6):
    n = n or int(rng.integers(1, 5))
    T = T if T is not None else float(rng.uniform(0.1, 1.0))
    return DlseModel(random_lse(rng, n, int(rng.integers(1, K_max + 1)), T),
                     random_lse(rng, n, int(rng.integers(1, K_max + 1)), T))


def central_difference(f, x, h):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def check_tropical(rng, count):
    worst = 0.0
    for _ in range(count):
        n, K = int(rng.integers(1, 7)), int(rng.integers(1, 13))
        p = random_lse(rng, n, K, float(10 ** rng.uniform(-3, 0)))
        x = rng.normal(size=(4, n))
        f0 = core.eval_tropical_limit(p, x)
        fT = core.eval_lse(p, x)
        worst = max(worst, float(np.max(f0 - fT)), float(np.max(fT - f0 - p.T * np.log(K))))
    return CheckResult("tropical_sandwich", count, worst, 1e-10)


def check_grad_x(rng, count):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng)
        x = rng.normal(size=m.n)
        fd = central_difference(lambda z: core.eval_dlse(m, z), x, 1e-6)
        worst = max(worst, _rel(fd, core.grad_x_dlse(m, x)))
    return CheckResult("grad_x", count, worst, 1e-6)


def check_param_grads(rng, count):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng)
        x = rng.normal(size=m.n)
        theta = training.pack(m)
        shape = (m.T, m.plus.K, m.minus.K, m.n)
        fd = central_difference(lambda t: core.eval_dlse(training.unpack(t, *shape), x), theta, 1e-6)
        g = training.param_gradients(m, x)
        an = np.concatenate([g.alphas.ravel(), g.betas, g.gammas.ravel(), g.deltas])
        worst = max(worst, _rel(fd, an))
    return CheckResult("param_gradients", count, worst, 1e-6)


def check_weight_sums(rng, count):
    worst = 0.0
    for _ in range(count):
        m = random_model(rng)
        g = training.param_gradients(m, rng.normal(size=m.n))
        worst = max(worst, float(abs(g.betas.sum() - 1)), float(abs(g.deltas.sum() + 1)))
    return CheckResult("weight_sums", count, worst, 1e-12)


def check_scaling(rng, count):
    worst = 0.0
    for _ in range(count):
        p = random_lse(rng, int(rng.integers(1, 5)), int(rng.integers(1, 8)), float(rng.uniform(0.01, 2)))
        x = rng.normal(size=(3, p.n))
        lhs = core.eval_lse(p, x)
        rhs = p.T * core.eval_lse(core.rescale_to_unit_T(p), x / p.T)
        worst = max(worst, _rel(lhs, rhs))
    return CheckResult("scaling_identity", count, worst, 1e-12)


def check_pwa(rng, count):
    worst = -np.inf
    for _ in range(count):
        k = int(rng.integers(1, 6))
        s = pwa.PwaSpec(rng.normal(), rng.normal(), np.sort(rng.uniform(-2, 2, k)),
                        rng.choice([-1, 1], k) * rng.uniform(0.2, 2, k))
        T = float(rng.choice([0.1, 0.01]))
        m, ep, em = pwa.pwa_to_dlse(s, T)
        x = np.linspace(-3, 3, 2001)
        gap = core.eval_dlse(m, x[:, None]) - pwa.eval_pwa(s, x)
        worst = max(worst, float(np.max(-gap - em)), float(np.max(gap - ep)))
    return CheckResult("pwa_certificate", count, worst, 1e-10)


def check_sf(rng, count):
    worst = -np.inf
    for _ in range(count):
        m = random_model(rng, T=1.0 / int(rng.integers(1, 11)), K_max=4)
        r = gpos.rationalize(m, 1e-4, radius=1.0)
        e, p, q = gpos.emit_sf(r)
        z = rng.normal(size=(50, m.n))
        z /= np.maximum(1.0, np.linalg.norm(z, axis=1))[:, None]
        dev = np.abs(np.log(gpos.eval_sf(e, p, q, np.exp(z))) - core.eval_dlse(m, z))
        worst = max(worst, float(np.max(dev)) - r.kappa)
        if not gpos.is_subtraction_free(e):
            worst = np.inf
    return CheckResult("sf_equivalence", count, worst, 1e-9)


def check_dca(rng, count):
    cfg = dca.DcaConfig()
    worst = -np.inf
    for i in range(count):
        m = random_model(rng)
        S = dca.Box(-np.ones(m.n), np.ones(m.n)) if i % 2 else dca.ScaledSimplex(1.0, m.n)
        _, trace = dca.dlsea(m, S, cfg)
        obj = np.array(trace.objectives)
        rise = float(np.max(np.diff(obj), initial=0.0)) - 2 * cfg.inner_tol
        infeas = max(S.violation(x) for x in trace.iterates) - 1e-10
        worst = max(worst, rise, infeas)
    return CheckResult("dca_descent", count, worst, 0.0)


CHECKS = [
    ("tropical_sandwich", check_tropical, 200),
    ("grad_x", check_grad_x, 50),
    ("param_gradients", check_param_grads, 50),
    ("weight_sums", check_weight_sums, 50),
    ("scaling_identity", check_scaling, 50),
    ("pwa_certificate", check_pwa, 20),
    ("sf_equivalence", check_sf, 10),
    ("dca_descent", check_dca, 10),
]


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for name, fn, count in CHECKS:
        try:
            out.append(fn(rng, count))
        except Exception:  # a crashing property counts as a failure
            out.append(CheckResult(name, count, float("inf"), 0.0))
    return out

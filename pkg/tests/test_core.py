import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from dlse import core
from dlse.core import DlseModel, LseParams
from dlse.errors import DimensionError, NonFiniteError, NumericalError
from dlse.pwa import PwaSpec, pwa_to_dlse

from conftest import random_lse, random_model


def fd_grad(f, x):
    g = np.empty_like(x)
    for i in range(x.size):
        h = 1e-5 * (1 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@st.composite
def instances(draw, T_min=1e-3):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    n = draw(st.integers(1, 6))
    K = draw(st.integers(1, 12))
    T = draw(st.floats(T_min, 1.0))
    rng = np.random.default_rng(seed)
    return random_lse(rng, n, K, T), rng.normal(size=n) * 2


class TestParams:
    def test_validation(self):
        with pytest.raises(DimensionError):
            LseParams(1.0, np.zeros((2, 2)), np.zeros(3))
        with pytest.raises(NonFiniteError):
            LseParams(0.0, np.zeros((1, 1)), np.zeros(1))
        with pytest.raises(NonFiniteError):
            LseParams(1.0, [[np.nan]], [0.0])
        with pytest.raises(DimensionError):
            LseParams(1.0, np.zeros((0, 2)), np.zeros(0))

    def test_arrays_read_only(self):
        p = LseParams(1.0, [[1.0, 2.0]], [0.0])
        with pytest.raises(ValueError):
            p.alphas[0, 0] = 5.0

    def test_model_requires_shared_T_and_n(self):
        a = LseParams(1.0, [[1.0]], [0.0])
        with pytest.raises(DimensionError):
            DlseModel(a, LseParams(0.5, [[1.0]], [0.0]))
        with pytest.raises(DimensionError):
            DlseModel(a, LseParams(1.0, [[1.0, 1.0]], [0.0]))
        m = DlseModel(a, LseParams(1.0, [[1.0], [2.0]], [0.0, 1.0]))
        assert (m.T, m.n) == (1.0, 1)


class TestEvalLse:
    def test_single_term_is_affine(self):
        p = LseParams(0.5, [[2.0, -1.0]], [3.0])
        assert core.eval_lse(p, [1.0, 1.0]) == 4.0

    def test_equal_terms_give_T_log_K(self):
        p = LseParams(1.0, np.zeros((2, 3)), [0.0, 0.0])
        assert_allclose(core.eval_lse(p, [0.3, -2.0, 7.0]), np.log(2), rtol=1e-15)
        assert_allclose(np.log(2), 0.693147, atol=1e-6)

    def test_high_precision_oracle(self):
        p = LseParams(0.25, [[0.0], [1.0]], [0.0, 0.0])
        mpmath.mp.dps = 50
        T, x = mpmath.mpf("0.25"), mpmath.mpf("0.3")
        ref = T * mpmath.log(mpmath.exp(0 / T) + mpmath.exp(x / T))
        assert_allclose(core.eval_lse(p, [0.3]), float(ref), rtol=1e-12)

    def test_batch_matches_pointwise(self, rng):
        p = random_lse(rng, 3, 5, 0.3)
        X = rng.normal(size=(7, 3))
        assert_allclose(core.eval_lse(p, X), [core.eval_lse(p, x) for x in X], rtol=1e-14)

    def test_no_overflow_at_small_T(self):
        p = LseParams(1e-3, [[1.0], [-1.0]], [0.0, 0.0])
        assert_allclose(core.eval_lse(p, [50.0]), 50.0, rtol=1e-15)

    def test_errors(self):
        p = LseParams(1.0, [[1.0, 2.0]], [0.0])
        with pytest.raises(DimensionError):
            core.eval_lse(p, [1.0, 2.0, 3.0])
        with pytest.raises(NonFiniteError):
            core.eval_lse(p, [np.inf, 0.0])
        with pytest.raises(NumericalError):
            core.eval_lse(LseParams(1e-9, [[1.0]], [0.0]), [1.0])

    def test_permutation_invariance_is_exact(self, rng):
        for _ in range(20):
            p = random_lse(rng, 3, 9, 0.2)
            X = rng.normal(size=(10, 3))
            q = p.permuted(rng.permutation(p.K))
            assert_array_equal(core.eval_lse(p, X), core.eval_lse(q, X))

    @settings(max_examples=200, deadline=None)
    @given(instances())
    def test_tropical_sandwich(self, inst):
        p, x = inst
        f0 = core.eval_tropical_limit(p, x)
        fT = core.eval_lse(p, x)
        assert f0 - 1e-10 <= fT <= f0 + p.T * np.log(p.K) + 1e-10

    @settings(max_examples=100, deadline=None)
    @given(instances(), st.floats(0, 1))
    def test_convexity(self, inst, lam):
        p, x = inst
        y = -x + 0.5
        mid = core.eval_lse(p, lam * x + (1 - lam) * y)
        assert mid <= lam * core.eval_lse(p, x) + (1 - lam) * core.eval_lse(p, y) + 1e-10


class TestGradients:
    def test_single_term(self):
        p = LseParams(0.7, [[1.5, -2.0]], [0.3])
        assert_array_equal(core.grad_x_lse(p, [4.0, 1.0]), [1.5, -2.0])

    def test_symmetric_pair(self):
        a = np.array([1.0, -2.0, 0.5])
        p = LseParams(0.3, np.stack([a, -a]), [0.4, 0.4])
        assert_allclose(core.grad_x_lse(p, np.zeros(3)), 0.0, atol=1e-15)

    def test_finite_differences(self, rng):
        for _ in range(20):
            p = random_lse(rng, 3, 5, float(rng.uniform(0.1, 1)))
            x = rng.normal(size=3)
            fd = fd_grad(lambda z: core.eval_lse(p, z), x)
            assert_allclose(core.grad_x_lse(p, x), fd, rtol=1e-6, atol=1e-8)

    def test_dlse_finite_differences(self, rng):
        for _ in range(20):
            m = random_model(rng, 4, 6, 3, float(rng.uniform(0.1, 1)))
            x = rng.normal(size=4)
            fd = fd_grad(lambda z: core.eval_dlse(m, z), x)
            assert_allclose(core.grad_x_dlse(m, x), fd, rtol=1e-6, atol=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(instances())
    def test_weights_and_convex_hull(self, inst):
        p, x = inst
        w = core.softmax_weights(p, x)
        assert abs(w.sum() - 1) <= 1e-12
        g = core.grad_x_lse(p, x)
        assert np.all(g >= p.alphas.min(axis=0) - 1e-10)
        assert np.all(g <= p.alphas.max(axis=0) + 1e-10)


class TestDlse:
    def test_identical_components_cancel(self, rng):
        p = random_lse(rng, 2, 4, 0.5)
        m = DlseModel(p, p)
        X = rng.normal(size=(5, 2))
        assert_array_equal(core.eval_dlse(m, X), 0.0)
        assert_array_equal(core.grad_x_dlse(m, X[0]), 0.0)

    def test_clipped_ramp(self):
        m, _, _ = pwa_to_dlse(PwaSpec(0, 0, [0.0, 1.0], [1.0, -1.0]), 0.1)
        assert abs(core.eval_dlse(m, [0.5]) - 0.5) <= 0.1 * np.log(2)


class TestRescale:
    def test_unit_T_is_identity(self):
        p = LseParams(1.0, [[1.0], [2.0]], [0.5, -0.5])
        assert core.rescale_to_unit_T(p) == p

    def test_half_T(self, rng):
        p = LseParams(0.5, [[1.0], [-3.0]], [1.0, 2.0])
        q = core.rescale_to_unit_T(p)
        assert_array_equal(q.betas, [2.0, 4.0])
        X = rng.normal(size=(100, 1))
        assert_allclose(core.eval_lse(p, X), 0.5 * core.eval_lse(q, X / 0.5), rtol=1e-12)

    def test_round_trip(self, rng):
        p = random_lse(rng, 3, 4, 0.37)
        back = core.rescale_from_unit_T(core.rescale_to_unit_T(p), p.T)
        assert_allclose(back.betas, p.betas, rtol=1e-14)
        assert_array_equal(back.alphas, p.alphas)

    @settings(max_examples=100, deadline=None)
    @given(instances(T_min=1e-2))
    def test_identity(self, inst):
        p, x = inst
        f = core.eval_lse(p, x)
        g = p.T * core.eval_lse(core.rescale_to_unit_T(p), x / p.T)
        assert abs(f - g) <= 1e-12 * (1 + abs(f))


class TestTropicalAndKappa:
    def test_tropical_single_term(self):
        p = LseParams(0.1, [[2.0, 1.0]], [-1.0])
        assert core.eval_tropical_limit(p, [1.0, 3.0]) == 4.0

    def test_tropical_tie(self):
        p = LseParams(0.1, [[1.0], [-1.0]], [0.0, 0.0])
        assert core.eval_tropical_limit(p, [0.0]) == 0.0

    def test_kappa_bounds_sampled_deviation(self, rng):
        R = 2.0
        for _ in range(20):
            p = random_lse(rng, 3, 5, 0.2)
            q = LseParams(0.2, p.alphas + rng.normal(scale=0.01, size=p.alphas.shape),
                          p.betas + rng.normal(scale=0.01, size=p.K))
            X = rng.normal(size=(500, 3))
            X *= (R * rng.uniform(0, 1, size=500) ** (1 / 3) / np.linalg.norm(X, axis=1))[:, None]
            dev = np.max(np.abs(core.eval_lse(p, X) - core.eval_lse(q, X)))
            assert dev <= core.kappa(p, q, radius=R) + 1e-10

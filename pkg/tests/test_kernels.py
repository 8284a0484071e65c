import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from maxdisc import kernels
from maxdisc.extremes import MaximaEngine
from maxdisc.model import ComponentParams, DenseDefault, PickandsGrid, SparseDefault, build_model, classify_grid
from maxdisc.sampler import FBMSampler, MeshSpec, stream

NB = kernels.BACKENDS["numba"]
NP = kernels.BACKENDS["numpy"]


class TestBridgeWeights:
    @given(st.floats(0.5, 0.9999), st.integers(1, 200))
    def test_endpoints(self, rho, K):
        w = kernels.bridge_weights(rho, K)
        assert w[0] == 0.0
        assert w[-1] == pytest.approx(1.0, rel=1e-12)
        assert np.all(np.diff(w) > 0)

    @given(st.floats(0.5, 0.999), st.integers(2, 60), st.floats(-3, 3), st.floats(-3, 3))
    def test_conditional_mean(self, rho, K, a, b):
        # mean of the weighted free path equals the OU bridge mean
        w = kernels.bridge_weights(rho, K)
        j = np.arange(K + 1)
        got = a * rho**j + (b - a * rho**K) * w
        want = (a * (rho**j - rho ** (2 * K - j)) + b * (rho ** (K - j) - rho ** (K + j))) / (1 - rho ** (2 * K))
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_conditional_variance(self):
        rho, K, reps = 0.95, 20, 20000
        w = kernels.bridge_weights(rho, K)
        gen = stream(1)
        e = gen.standard_normal((reps, K)) * math.sqrt(1 - rho * rho)
        free = np.zeros((reps, K + 1))
        for j in range(1, K + 1):
            free[:, j] = rho * free[:, j - 1] + e[:, j - 1]
        bridge = free - free[:, [K]] * w
        j = np.arange(K + 1)
        want = (1 - rho ** (2 * j)) * (1 - rho ** (2 * (K - j))) / (1 - rho ** (2 * K))
        var = bridge.var(axis=0)
        se = np.sqrt(2.0 / reps) * np.maximum(want, 1e-12)
        assert np.all(np.abs(var - want) <= 4 * se + 1e-12)


def _ou_args(rule, lnT=6.0, **kw):
    T = math.exp(lnT)
    eng = MaximaEngine(build_model([ComponentParams(1.0)]), T, classify_grid(rule, 1.0), **kw)
    return eng._ou_args[0]


class TestOUKernel:
    @pytest.mark.parametrize("rule", [SparseDefault(), PickandsGrid(1.0), PickandsGrid(0.3), DenseDefault()])
    def test_backends_agree(self, rule):
        args = _ou_args(rule)
        for r in range(5):
            a = NB["ou_joint_maxima"](stream(2, r), *args)
            b = NP["ou_joint_maxima"](stream(2, r), *args)
            np.testing.assert_allclose(a[:2], b[:2], rtol=0, atol=1e-10)
            assert a[2:] == b[2:]

    @pytest.mark.parametrize("rule", [SparseDefault(), PickandsGrid(1.0), DenseDefault()])
    def test_grid_below_continuous(self, rule):
        args = _ou_args(rule)
        for r in range(20):
            mc, mg, nref, nskip = kernels.ou_joint_maxima(stream(3, r), *args)
            assert mg <= mc
            assert nref + nskip == args[0]

    def test_skip_rule_matches_full_refinement(self):
        # skipping intervals changes which draws are used but not the law of the maxima
        args = list(_ou_args(PickandsGrid(1.0), lnT=5.0))
        full = list(args)
        full[6] = np.inf
        reps = 1500
        skip = np.array([kernels.ou_joint_maxima(stream(4, r), *args)[:2] for r in range(reps)])
        every = np.array([kernels.ou_joint_maxima(stream(5, r), *full)[:2] for r in range(reps)])
        for j in range(2):
            assert stats.ks_2samp(skip[:, j], every[:, j]).pvalue > 1e-3


class TestWindowStats:
    @pytest.mark.parametrize(
        "alpha, mode, m",
        [(1.0, kernels.SUP_BRIDGE, 100), (2.0, kernels.SUP_LINEAR, 50), (1.5, kernels.SUP_MESH, 1), (0.5, kernels.SUP_MESH, 7)],
    )
    def test_backends_agree(self, alpha, mode, m):
        h = 0.01
        lambdas = np.array([800, 1600, 3200], dtype=np.int64)
        fbm = FBMSampler(alpha / 2, MeshSpec(h, 3201))
        for r in range(3):
            gen = stream(8, r)
            B = fbm.sample(gen)
            U = 1.0 - gen.random(3200)
            taus = np.array([gen.integers(0, k + 1) for k in lambdas], dtype=np.int64)
            a = NB["window_stats"](B, U, lambdas, taus, m, alpha, h, mode)
            b = NP["window_stats"](B, U, lambdas, taus, m, alpha, h, mode)
            for x, y in zip(a, b):
                np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
            L, c, g = a
            assert np.all(g <= c + 1e-12)
            if mode == kernels.SUP_MESH:
                assert np.all(L >= c - 1e-12)  # log-sum-exp dominates the max


@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 60))
def test_lattice_counts_backends(seed, p, n):
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(n, p))
    Y = X - gen.exponential(size=(n, p))
    xs = gen.normal(size=(5, p))
    ys = gen.normal(size=(5, p))
    a = NB["lattice_counts"](X, Y, xs, ys)
    b = NP["lattice_counts"](X, Y, xs, ys)
    assert np.array_equal(a, b)
    brute = [sum(np.all(X[r] <= xs[q]) and np.all(Y[r] <= ys[q]) for r in range(n)) for q in range(5)]
    assert a.tolist() == brute

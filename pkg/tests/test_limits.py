import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxdisc.errors import DimensionMismatch, MissingConstant, NegativeExponent, QuadratureUnavailable
from maxdisc.limits import (
    HTable,
    LimitSpec,
    f_exponent,
    g_exponent,
    gumbel_cdf,
    h_exponent,
    latent_weights,
    limit_cdf,
    limit_cdf_many,
)
from maxdisc.model import ComponentParams, build_model

P1_R05 = build_model([ComponentParams(1.0, 1.0, 0.5)])
P2_DENSE = build_model(
    [ComponentParams(1.0, 1.0, 0.5), ComponentParams(1.0, 1.0, 0.5)], [[0.5, 0.25], [0.25, 0.5]]
)


def zero_table(H_alpha=1.0, H_d=0.5):
    axis = np.linspace(-3, 5, 9)
    z = np.zeros((9, 9))
    return HTable(axis, axis, z, z, H_alpha, H_d)


class TestExponents:
    def test_f_examples(self):
        assert f_exponent([0.0], [0.0], [0.0], [0.0]) == 2.0
        assert f_exponent([0.0], [0.0], [0.0], [0.5]) == pytest.approx(2 * math.exp(-0.5))
        assert f_exponent([1e3], [1e3], [0.0], [0.0]) == 0.0

    def test_h_examples(self):
        assert h_exponent([0.0], [0.0], [0.0], [0.0]) == 1.0
        assert h_exponent([0.0], [3.0], [1.0], [0.5]) == pytest.approx(math.exp(0.5))

    def test_latent_weights(self):
        assert latent_weights(np.array([0.0]), np.array([0.0]))[0] == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            f_exponent([0.0, 1.0], [0.0], [0.0], [0.5])

    @given(
        st.lists(st.floats(-5, 5), min_size=1, max_size=3),
        st.floats(-3, 3),
        st.floats(0, 2),
    )
    def test_h_between_half_f_and_f(self, xs, z, r):
        p = len(xs)
        x = np.array(xs)
        zz = np.full(p, z)
        rr = np.full(p, r)
        for y in (x, x + 1.0, x - 0.5):
            h = h_exponent(x, y, zz, rr)
            f = f_exponent(x, y, zz, rr)
            assert h <= f * (1 + 1e-12)
            assert h >= 0.5 * f * (1 - 1e-12)
        assert h_exponent(x, x, zz, rr) == pytest.approx(0.5 * f_exponent(x, x, zz, rr))

    def test_g_reduces_to_f_when_table_vanishes(self):
        x, y, z = [0.3], [-0.2], [0.4]
        g = g_exponent(x, y, z, [0.5], 1.0, 0.5, zero_table())
        assert g == pytest.approx(f_exponent(x, y, z, [0.5]))

    def test_g_at_table_bound(self):
        t = zero_table()
        t.values = t.bound(t.xs[:, None], t.ys[None, :])
        x, y = 0.4, -0.3
        # H at its bound cancels the smaller of e^-x, e^-y
        g = g_exponent([x], [y], [0.0], [0.0], 1.0, 0.5, t)
        assert g == pytest.approx(max(math.exp(-x), math.exp(-y)), rel=1e-12)

    def test_g_rejects_oversized_table(self):
        with pytest.raises(NegativeExponent):
            g_exponent([0.0], [0.0], [0.0], [0.0], 1.0, 0.5, lambda x, y: 50.0)

    def test_g_needs_constants(self):
        with pytest.raises(MissingConstant):
            g_exponent([0.0], [0.0], [0.0], [0.0], None, 0.5, zero_table())


class TestHTable:
    def test_nodes_and_bilinear(self):
        xs, ys = np.array([0.0, 1.0]), np.array([0.0, 2.0])
        v = np.array([[0.4, 0.2], [0.3, 0.1]])
        t = HTable(xs, ys, v, v * 0, 10.0, 10.0)
        assert t(0.0, 0.0) == 0.4 and t(1.0, 2.0) == 0.1
        assert t(0.5, 1.0) == pytest.approx(0.25)
        # capped by the bound between nodes
        t2 = HTable(xs, ys, np.array([[1.0, 1.0], [1.0, 1.0]]), v * 0, 1.0, 1.0)
        assert t2(0.5, 1.0) == pytest.approx(min(math.exp(-0.5), math.exp(-1.0)))
        np.testing.assert_allclose(t(np.array([0.0, 1.0]), np.array([2.0, 0.0])), [0.2, 0.3])

    def test_outside_uses_bound(self):
        t = zero_table(2.0, 0.5)
        assert t(10.0, -7.0) == pytest.approx(min(2 * math.exp(-10), 0.5 * math.exp(7)))

    def test_csv_roundtrip(self, tmp_path):
        gen = np.random.default_rng(0)
        axis = np.linspace(-1, 1, 5)
        t = HTable(axis, axis + 0.5, gen.random((5, 5)), gen.random((5, 5)), 1.03, 0.46)
        t.write_csv(tmp_path / "h.csv")
        back = HTable.read_csv(tmp_path / "h.csv")
        for a in ("xs", "ys", "values", "stderr"):
            assert np.array_equal(getattr(t, a), getattr(back, a))
        assert (back.H_alpha, back.H_d) == (1.03, 0.46)


class TestLimitCdf:
    def test_independent_sparse(self):
        spec = LimitSpec.from_model(build_model([ComponentParams(1.0)]), "sparse")
        v = limit_cdf(spec, [0.0], [0.0])
        assert v.value == pytest.approx(math.exp(-2.0), rel=1e-15)
        assert v.method == "none"

    def test_independent_dense(self):
        spec = LimitSpec.from_model(build_model([ComponentParams(1.0)]), "dense")
        assert limit_cdf(spec, [0.0], [1.0]).value == pytest.approx(math.exp(-1.0))

    def test_sparse_r05_oracle(self, oracles):
        spec = LimitSpec.from_model(P1_R05, "sparse")
        v = limit_cdf(spec, [0.0], [0.0])
        assert v.value == pytest.approx(oracles["sparse_r05_00"], abs=1e-9)
        assert v.error < 1e-7  # |Q_n - Q_n/2| is conservative
        X = [[x] for x, _, _ in oracles["sparse_r05_lattice"]]
        Y = [[y] for _, y, _ in oracles["sparse_r05_lattice"]]
        vals, _ = limit_cdf_many(spec, X, Y)
        np.testing.assert_allclose(vals, [v for _, _, v in oracles["sparse_r05_lattice"]], atol=1e-9)

    def test_dense_p2_oracle(self, oracles):
        spec = LimitSpec.from_model(P2_DENSE, "dense")
        pts = oracles["dense_p2_lattice"]
        vals, _ = limit_cdf_many(spec, [[x, x] for x, _, _ in pts], [[y, y] for _, y, _ in pts])
        np.testing.assert_allclose(vals, [v for _, _, v in pts], atol=1e-7)

    def test_pickands_with_empty_table(self):
        spec = LimitSpec.from_model(build_model([ComponentParams(1.0)]), "pickands", H_alpha=1.0, H_d_alpha=0.5,
                                    H_xy=zero_table())
        assert limit_cdf(spec, [0.0], [0.0]).value == pytest.approx(math.exp(-2.0))

    def test_pickands_needs_table(self):
        with pytest.raises(MissingConstant):
            LimitSpec.from_model(P1_R05, "pickands", H_alpha=1.0, H_d_alpha=0.5)

    def test_extremes_of_the_axis(self):
        for regime in ("sparse", "dense", "corollary"):
            spec = LimitSpec.from_model(P2_DENSE, regime)
            lo = limit_cdf(spec, [-20.0, -20.0], [-20.0, -20.0]).value
            hi = limit_cdf(spec, [30.0, 30.0], [30.0, 30.0]).value
            assert lo < 1e-6 and hi > 1 - 1e-6

    @pytest.mark.parametrize("regime", ["sparse", "dense"])
    def test_monotone_in_each_coordinate(self, regime):
        spec = LimitSpec.from_model(P2_DENSE, regime)
        ladder = np.linspace(-2, 3, 5)
        for k in range(4):
            pts = np.zeros((5, 4))
            pts[:, k] = ladder
            vals, _ = limit_cdf_many(spec, pts[:, :2], pts[:, 2:])
            assert np.all(np.diff(vals) >= -1e-12)

    @given(st.floats(-3, 4), st.integers(1, 3), st.integers(0, 10_000))
    def test_corollary_is_dense_with_free_grid(self, x, p, seed):
        gen = np.random.default_rng(seed)
        r = gen.uniform(0, 1.5, p)
        A = gen.normal(size=(p, p))
        C = A @ A.T
        d = np.sqrt(np.diag(C))
        cross = np.sqrt(np.outer(r, r)) * C / np.outer(d, d)
        model = build_model([ComponentParams(1.0, 1.0, v) for v in r], cross, allow_singular_latent=True)
        xs = np.full(p, x)
        dense = limit_cdf(LimitSpec.from_model(model, "dense"), xs, np.full(p, np.inf)).value
        cor = limit_cdf(LimitSpec.from_model(model, "corollary"), xs).value
        assert abs(dense - cor) <= 1e-10

    def test_gauss_hermite_matches_qmc(self):
        gen = np.random.default_rng(42)
        for _ in range(10):
            r12 = gen.uniform(0, 0.5)
            model = build_model(
                [ComponentParams(1.0, 1.0, 0.5), ComponentParams(1.0, 1.0, 0.5)], [[0.5, r12], [r12, 0.5]]
            )
            spec = LimitSpec.from_model(model, "sparse")
            x, y = gen.uniform(-1, 2, 2), gen.uniform(-1, 2, 2)
            a = limit_cdf(spec, x, y, method="gh")
            b = limit_cdf(spec, x, y, method="qmc", seed=int(gen.integers(1000)))
            assert abs(a.value - b.value) <= 3 * math.hypot(a.error, b.error) + 1e-12

    def test_singular_latent_integrates_in_rank(self):
        m = build_model(
            [ComponentParams(1.0, 1.0, 0.5), ComponentParams(1.0, 1.0, 0.5)],
            [[0.5, 0.5], [0.5, 0.5]],
            allow_singular_latent=True,
        )
        spec = LimitSpec.from_model(m, "corollary")
        # Z_1 = Z_2: same as one component with doubled coefficient
        one = LimitSpec.from_model(P1_R05, "corollary")
        assert limit_cdf(spec, [0.2, 0.2]).value == pytest.approx(limit_cdf(one, [0.2 - math.log(2)]).value, abs=1e-12)

    def test_high_dimension(self):
        comps = [ComponentParams(1.0, 1.0, 0.5)] * 4
        m = build_model(comps, np.eye(4) * 0.5)
        spec = LimitSpec.from_model(m, "corollary")
        with pytest.raises(QuadratureUnavailable):
            limit_cdf(spec, np.zeros(4), method="gh")
        v = limit_cdf(spec, np.zeros(4))
        one = limit_cdf(LimitSpec.from_model(P1_R05, "corollary"), [0.0]).value
        assert v.method == "qmc"
        assert abs(v.value - one**4) <= 4 * v.error + 1e-9

    def test_gumbel(self):
        assert gumbel_cdf(0.0) == pytest.approx(math.exp(-1.0))

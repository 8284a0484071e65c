import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxdisc.errors import (
    AlphaOutOfRange,
    DimensionMismatch,
    HorizonTooSmall,
    NegativeDiagonal,
    NonPSDLatent,
    NonSymmetricCross,
    SingularLatent,
    UndecidableRegime,
    ValidationError,
)
from maxdisc.model import (
    ComponentParams,
    DenseDefault,
    ExplicitDelta,
    PickandsGrid,
    Regime,
    SparseDefault,
    build_model,
    check_horizon,
    classify_grid,
    correlation_at,
    power_law_delta,
)

E8 = math.exp(8.0)


def comps(*rs, alpha=1.0, c=1.0):
    return [ComponentParams(alpha, c, r) for r in rs]


class TestBuildModel:
    def test_single_weak_component(self):
        m = build_model(comps(0.0))
        assert m.p == 1
        assert m.sigma_z.tolist() == [[1.0]]

    def test_singular_latent_needs_flag(self):
        cross = [[0.5, 0.5], [0.5, 0.5]]
        with pytest.raises(SingularLatent):
            build_model(comps(0.5, 0.5), cross)
        m = build_model(comps(0.5, 0.5), cross, allow_singular_latent=True)
        np.testing.assert_allclose(m.sigma_z, [[1, 1], [1, 1]])
        assert m.latent_rank == 1
        # Z_2 = Z_1 through the factor
        np.testing.assert_allclose(abs(m.latent_factor[0, 0]), abs(m.latent_factor[1, 0]))

    def test_non_psd_reports_eigenvalue(self):
        with pytest.raises(NonPSDLatent) as err:
            build_model(comps(1.0, 1.0), [[1.0, 2.0], [2.0, 1.0]])
        assert err.value.min_eigenvalue == pytest.approx(-1.0)

    @pytest.mark.parametrize(
        "kwargs, exc",
        [
            (dict(alpha=0.0), AlphaOutOfRange),
            (dict(alpha=2.5), AlphaOutOfRange),
            (dict(alpha=1.0, c=0.0), ValidationError),
            (dict(alpha=1.0, r_diag=-0.1), NegativeDiagonal),
        ],
    )
    def test_component_ranges(self, kwargs, exc):
        with pytest.raises(exc):
            ComponentParams(**kwargs)

    def test_cross_checks(self):
        with pytest.raises(NonSymmetricCross):
            build_model(comps(0.5, 0.5), [[0.5, 0.1], [0.2, 0.5]])
        with pytest.raises(DimensionMismatch):
            build_model(comps(0.5, 0.5), [[0.5]])
        with pytest.raises(ValidationError):
            build_model(comps(0.5, 0.5), [[0.4, 0.1], [0.1, 0.5]])

    def test_model_arrays_read_only(self):
        m = build_model(comps(0.5, 0.5), [[0.5, 0.2], [0.2, 0.5]])
        with pytest.raises(ValueError):
            m.r_cross[0, 1] = 1.0

    def test_zero_cross_with_positive_diagonal_allowed(self):
        m = build_model(comps(0.5, 0.3), [[0.5, 0.0], [0.0, 0.3]])
        np.testing.assert_allclose(m.sigma_z, np.eye(2))

    @given(
        st.lists(st.floats(0.0, 2.0), min_size=2, max_size=4),
        st.integers(0, 2**32 - 1),
    )
    def test_accepted_latent_is_psd(self, diag, seed):
        p = len(diag)
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(p, p))
        corr = A @ A.T
        d = np.sqrt(np.diag(corr))
        corr = corr / np.outer(d, d)
        r = np.sqrt(np.outer(diag, diag)) * corr
        np.fill_diagonal(r, diag)
        try:
            m = build_model([ComponentParams(1.0, 1.0, v) for v in diag], r, allow_singular_latent=True)
        except NonPSDLatent:
            return
        assert np.linalg.eigvalsh(m.sigma_z).min() >= -1e-10


class TestCorrelation:
    def test_unit_variance(self):
        m = build_model(comps(0.5))
        assert correlation_at(m, 0, 0, 0.0, E8) == pytest.approx(1.0, abs=1e-15)

    def test_long_range_floor(self):
        m = build_model(comps(0.5))
        assert correlation_at(m, 0, 0, 1e3, E8) == pytest.approx(0.0625)
        for lt in (8, 16, 32):
            assert correlation_at(m, 0, 0, 1e4, math.exp(lt)) * lt == pytest.approx(0.5)

    def test_cross(self):
        m = build_model(comps(0.8, 0.8), [[0.8, 0.8], [0.8, 0.8]], allow_singular_latent=True)
        assert correlation_at(m, 0, 1, 3.0, E8) == pytest.approx(0.1)

    def test_horizon_bounds(self):
        m = build_model(comps(0.5))
        with pytest.raises(HorizonTooSmall):
            correlation_at(m, 0, 0, 1.0, math.e)
        with pytest.raises(HorizonTooSmall):
            correlation_at(m, 0, 0, 1.0, math.exp(2.0))
        with pytest.raises(HorizonTooSmall):
            check_horizon(build_model(comps(5.0)), math.exp(4.0))
        check_horizon(build_model(comps(5.0)), math.exp(6.0))

    @given(
        st.floats(0.1, 2.0),
        st.floats(0.2, 5.0),
        st.floats(0.0, 3.0),
        st.floats(3.0, 40.0),
        st.floats(1e-3, 50.0),
    )
    def test_diagonal_shape(self, alpha, c, r, lnT, t):
        m = build_model([ComponentParams(alpha, c, r)])
        T = math.exp(lnT)
        if r / lnT >= 1:
            return
        v = correlation_at(m, 0, 0, t, T)
        assert 0.0 <= v <= 1.0
        assert v > 0.0 or r == 0.0  # kernel may underflow when there is no floor
        v2 = correlation_at(m, 0, 0, t * 1.5 + 1e-3, T)
        base = math.exp(-c * t**alpha)
        if base > 1e-12:
            assert v2 < v
        far = 1e9
        rho = r / lnT
        expect = rho + (1 - rho) * math.exp(-c * far**alpha)
        assert correlation_at(m, 0, 0, far, T) == pytest.approx(expect, rel=1e-12, abs=1e-15)

    @given(st.floats(0.5, 2.0), st.floats(0.2, 3.0), st.floats(0.0, 2.0))
    def test_local_expansion(self, alpha, c, r):
        m = build_model([ComponentParams(alpha, c, r)])
        T = E8
        rho = r / 8.0
        errs = []
        for t in (1e-3, 1e-4, 1e-5):
            ratio = (1.0 - correlation_at(m, 0, 0, t, T)) / (c * t**alpha)
            errs.append(abs(ratio / (1.0 - rho) - 1.0))
        assert errs[-1] < 0.01
        assert errs[2] <= errs[0] + 1e-5  # roundoff dominates when alpha = 2

    def test_strong_dependence_scaling(self):
        m = build_model(comps(0.5, 0.5), [[0.5, 0.3], [0.3, 0.5]])
        for lt in (8, 16, 32):
            T = math.exp(lt)
            assert correlation_at(m, 0, 1, T, T) * lt == pytest.approx(0.3)


class TestClassify:
    def test_constant_is_sparse(self):
        g = classify_grid(power_law_delta(0.25, 0.0), 1.0)
        assert g.regime is Regime.SPARSE and math.isinf(g.D)

    def test_explicit_pickands(self):
        g = classify_grid(ExplicitDelta(lambda T: 0.5 * (2 * math.log(T)) ** -1.0), 1.0)
        assert g.regime is Regime.PICKANDS
        assert g.D == pytest.approx(0.5)

    def test_explicit_dense(self):
        g = classify_grid(power_law_delta(1.0, -2.0), 1.0)
        assert g.regime is Regime.DENSE and g.D == 0.0

    def test_builtins(self):
        assert classify_grid(SparseDefault(), 1.5).regime is Regime.SPARSE
        assert classify_grid(DenseDefault(), 0.7).regime is Regime.DENSE
        g = classify_grid(PickandsGrid(2.0), 1.0)
        assert g.regime is Regime.PICKANDS and g.d == 2.0
        assert g.delta(E8) == pytest.approx(2.0 / 16.0)

    def test_non_monotone_is_undecidable(self):
        bumpy = ExplicitDelta(lambda T: (2 * math.log(T)) ** -1.0 * (1.0 if math.log(T) in (8.0, 32.0) else 3.0))
        with pytest.raises(UndecidableRegime):
            classify_grid(bumpy, 1.0)

    @given(st.floats(0.2, 2.0), st.floats(0.05, 20.0))
    def test_pickands_grid_recovers_d(self, alpha, d):
        rule = ExplicitDelta(lambda T: d * (2 * math.log(T)) ** (-1.0 / alpha))
        g = classify_grid(rule, alpha)
        assert g.regime is Regime.PICKANDS
        assert g.D == pytest.approx(d)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorgp.basis import (
    VIRKLER,
    ParisBasis,
    ParisLawConfig,
    PolynomialBasis,
    adaptive_simpson,
    basis_from_descriptor,
    paris_cycles,
)
from priorgp.errors import DomainError, IllConditionedBasisError, InvalidArgumentError, QuadratureError


def composite_simpson(f, a, b, panels):
    x = np.linspace(a, b, 2 * panels + 1)
    y = f(x)
    h = (b - a) / (2 * panels)
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def paris_oracle(a, alpha, cfg, panels=200_000):
    def f(z):
        return (np.cos(np.pi * z / cfg.width) / z) ** (alpha / 2)

    return cfg.prefactor(alpha) * composite_simpson(f, cfg.a0, a, panels)


class TestAdaptiveSimpson:
    def test_cubic_exact(self):
        assert adaptive_simpson(lambda x: x**3 - 2 * x, 0.0, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_exp(self):
        assert adaptive_simpson(math.exp, 0.0, 1.0) == pytest.approx(math.e - 1, rel=1e-10)

    def test_empty_interval(self):
        assert adaptive_simpson(math.sin, 1.0, 1.0) == 0.0

    def test_reversed_interval(self):
        assert adaptive_simpson(math.cos, 1.0, 0.0) == pytest.approx(-math.sin(1.0), rel=1e-10)

    def test_singular_integrand_fails(self):
        with pytest.raises(QuadratureError):
            adaptive_simpson(lambda x: 1.0 / x if x > 0 else 1e300, 0.0, 1.0, max_depth=12)

    @settings(max_examples=25, deadline=None)
    @given(k=st.floats(0.1, 5.0), b=st.floats(0.5, 4.0))
    def test_sin_family(self, k, b):
        expected = (1 - math.cos(k * b)) / k
        assert adaptive_simpson(lambda x: math.sin(k * x), 0.0, b) == pytest.approx(expected, rel=1e-8, abs=1e-12)


class TestParisLaw:
    def test_alpha_zero_is_linear(self):
        cfg = ParisLawConfig(152.4, 48.26, 9.0, 8.7096e-11, (0.0,))
        for a in (9.5, 20.0, 70.0):
            assert paris_cycles(a, 0.0, cfg) == pytest.approx((a - 9.0) / cfg.C, rel=1e-12)

    def test_alpha_four_wide_plate(self):
        # W -> infinity removes the finite-width correction: integrand 1/z^2.
        cfg = ParisLawConfig(1e9, 48.26, 9.0, 8.7096e-11, (4.0,))
        for a in (10.0, 25.0, 60.0):
            closed = (1 / 9.0 - 1 / a) / (cfg.C * cfg.stress_range**4 * math.pi**2)
            assert paris_cycles(a, 4.0, cfg) == pytest.approx(closed, rel=1e-6)

    def test_virkler_against_composite_simpson(self):
        for a in (12.0, 30.0, 45.0):
            assert paris_cycles(a, 2.9, VIRKLER) == pytest.approx(paris_oracle(a, 2.9, VIRKLER), rel=1e-8)

    def test_zero_at_initial_length(self):
        assert paris_cycles(9.0, 2.9, VIRKLER) == 0.0

    @pytest.mark.parametrize("a", [8.9, 76.2, 100.0, math.nan])
    def test_domain(self, a):
        with pytest.raises(DomainError):
            paris_cycles(a, 2.9, VIRKLER)

    def test_fundamental_theorem(self):
        # dN/da equals the integrand times the prefactor (central differences).
        basis = ParisBasis(VIRKLER, direct=True)
        for a in (15.0, 40.0):
            h = 1e-3
            fd = (paris_cycles(a + h, 2.9, VIRKLER) - paris_cycles(a - h, 2.9, VIRKLER)) / (2 * h)
            assert basis.design_derivative([a])[0, 0] == pytest.approx(fd, rel=1e-6)

    def test_doubling_C_halves_cycles(self):
        cfg2 = ParisLawConfig(152.4, 48.26, 9.0, 2 * 8.7096e-11, (2.9,))
        a = np.array([12.0, 33.0, 60.0])
        np.testing.assert_allclose(ParisBasis(cfg2).design(a), ParisBasis(VIRKLER).design(a) / 2, rtol=1e-15)

    @pytest.mark.parametrize("bad", [dict(width=-1.0), dict(a0=80.0), dict(C=0.0), dict(alphas=(-1.0,))])
    def test_invalid_config(self, bad):
        d = {**VIRKLER.to_dict(), **bad}
        with pytest.raises(InvalidArgumentError):
            ParisLawConfig.from_dict(d)

    def test_config_roundtrip(self):
        assert ParisLawConfig.from_dict(VIRKLER.to_dict()) == VIRKLER


class TestParisBasis:
    def test_table_matches_direct(self):
        cfg = ParisLawConfig(152.4, 48.26, 9.0, 8.7096e-11, (2.6, 3.2))
        a = np.linspace(9.0, 75.0, 23)
        np.testing.assert_allclose(ParisBasis(cfg).design(a), ParisBasis(cfg, direct=True).design(a), rtol=1e-9)

    def test_monotone_increasing(self):
        d = ParisBasis(VIRKLER).design(np.linspace(9.0, 76.0, 300))[:, 0]
        assert np.all(np.diff(d) > 0)

    def test_multi_alpha_accepted(self):
        cfg = ParisLawConfig(152.4, 48.26, 9.0, 8.7096e-11, (2.6, 2.8, 3.0, 3.2))
        assert ParisBasis(cfg).size == 4

    def test_near_duplicate_alphas_rejected(self):
        cfg = ParisLawConfig(152.4, 48.26, 9.0, 8.7096e-11, (2.6, 2.9, 2.9 + 1e-9))
        with pytest.raises(IllConditionedBasisError) as info:
            ParisBasis(cfg)
        assert info.value.pair == (1, 2)

    def test_domain_checked(self):
        with pytest.raises(DomainError):
            ParisBasis(VIRKLER).design([5.0])

    def test_descriptor_roundtrip(self):
        b = basis_from_descriptor(ParisBasis(VIRKLER).descriptor())
        assert isinstance(b, ParisBasis) and b.config == VIRKLER


class TestPolynomialBasis:
    def test_design(self):
        np.testing.assert_array_equal(PolynomialBasis(2).design([2.0]), [[1.0, 2.0, 4.0]])

    def test_derivative(self):
        np.testing.assert_array_equal(PolynomialBasis(3).design_derivative([2.0]), [[0.0, 1.0, 4.0, 12.0]])

    def test_order_zero(self):
        b = PolynomialBasis(0)
        np.testing.assert_array_equal(b.design([1.0, 5.0]), [[1.0], [1.0]])
        np.testing.assert_array_equal(b.design_derivative([1.0]), [[0.0]])

    def test_negative_order(self):
        with pytest.raises(InvalidArgumentError):
            PolynomialBasis(-1)

    def test_very_high_order_ill_conditioned(self):
        with pytest.raises(IllConditionedBasisError) as info:
            PolynomialBasis(20, domain=(0.0, 1.0))
        assert info.value.pair == (19, 20)

    def test_descriptor_roundtrip(self):
        assert basis_from_descriptor(PolynomialBasis(3).descriptor()).q == 3

    def test_unknown_descriptor(self):
        with pytest.raises(InvalidArgumentError):
            basis_from_descriptor({"kind": "fourier"})

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from dampns import (
    ClipPolicy,
    DampingParams,
    OverflowRisk,
    PhysicalVectorField,
    SpectralVectorField,
    damping_dissipation,
    damping_pointwise,
    damping_term,
    forward_transform,
    init_random_divfree,
    lemma2_gap,
    lemma2_power_gap,
    make_grid,
    transport_term,
)
from dampns.nonlinearity import lemma2_scale


def _field(grid, *components):
    return forward_transform(PhysicalVectorField(np.stack(components), grid))


def _shear(grid, amp):
    x = grid.coords
    zero = np.zeros(grid.shape)
    return _field(grid, amp * np.sin(x[1]), zero, zero)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(a=-1), dict(b=0), dict(r=0.5), dict(a=float("nan"))])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            DampingParams(**kw)

    def test_zero_amplitude_is_inactive(self):
        assert not DampingParams(0.0).active
        assert DampingParams().active

    def test_default_clip_threshold(self):
        assert ClipPolicy().resolve(DampingParams(1, 2, 4)) == pytest.approx((700 / 2) ** 0.25)

    def test_unsafe_v_max_rejected(self):
        with pytest.raises(ValueError, match="700"):
            ClipPolicy(v_max=10.0).resolve(DampingParams(1, 1, 4))

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            ClipPolicy(mode="wrap")


class TestPointwise:
    def test_value(self):
        v = np.array([0.3, -0.4, 0.0])
        p = DampingParams(2.0, 0.5, 3.0)
        expected = 2.0 * math.expm1(0.5 * 0.5**3) * v
        assert np.allclose(damping_pointwise(v, p), expected, rtol=1e-14)

    def test_zero_amplitude(self):
        assert np.all(damping_pointwise([1.0, 2.0, 3.0], DampingParams(0.0)) == 0)

    def test_saturation_evaluates_at_capped_vector(self):
        v = np.array([0.0, 10.0, 0.0])
        p = DampingParams(1.0, 1.0, 4.0)
        out = damping_pointwise(v, p, ClipPolicy(v_max=1.5))
        assert np.allclose(out, math.expm1(1.5**4) * np.array([0.0, 1.5, 0.0]), rtol=1e-14)

    def test_error_mode(self):
        with pytest.raises(OverflowRisk) as info:
            damping_pointwise([0.0, 0.0, 3.0], DampingParams(), ClipPolicy(v_max=2.0, mode="error"))
        assert info.value.speed == pytest.approx(3.0)

    def test_nonfinite_input(self):
        with pytest.raises(ValueError):
            damping_pointwise([np.nan, 0, 0], DampingParams())


class TestTransport:
    def test_triad(self):
        g = make_grid(8)
        x = g.coords
        u = _field(g, np.zeros(g.shape), np.cos(x[0]), np.cos(x[1]))
        t = transport_term(u)
        # (u.grad)u = (0, 0, -cos x sin y)
        expected = {(1, 1, 0): 0.25j, (1, -1, 0): -0.25j, (-1, -1, 0): -0.25j, (-1, 1, 0): 0.25j}
        for k, val in expected.items():
            assert t.coeffs[2][k] == pytest.approx(val, abs=1e-14)
        mask = np.ones(g.shape, bool)
        for k in expected:
            mask[k] = False
        assert np.max(np.abs(t.coeffs[2][mask])) < 1e-14
        assert np.max(np.abs(t.coeffs[:2])) < 1e-14

    def test_shear_is_steady_for_euler(self):
        g = make_grid(16)
        assert np.max(np.abs(transport_term(_shear(g, 2.0)).coeffs)) < 1e-13

    def test_energy_neutral(self):
        g = make_grid(16)
        u = init_random_divfree(g, 7, g.trunc_radius, 5.0)
        t = transport_term(u)
        assert abs(np.vdot(u.coeffs, t.coeffs).real) < 1e-12 * np.sum(np.abs(u.coeffs) ** 2)

    def test_rejects_aliasing_input(self):
        g = make_grid(8, 1.0, 2.0)
        c = np.zeros((3,) + g.shape, dtype=complex)
        c[1, 3, 0, 0] = c[1, -3, 0, 0] = 0.5
        with pytest.raises(ValueError, match="outside"):
            transport_term(SpectralVectorField(c, g))


class TestDamping:
    # even r keeps |u|^r smooth, so collocation is spectrally accurate
    @pytest.mark.parametrize("amp,r,n", [(0.5, 4.0, 32), (1.0, 2.0, 32), (1.2, 4.0, 64)])
    def test_shear_against_quadrature(self, amp, r, n):
        g = make_grid(n)
        p = DampingParams(1.5, 1.0, r)
        d = damping_term(_shear(g, amp), p)

        def f(y):
            s = amp * math.sin(y)
            return 1.5 * math.expm1(abs(s) ** r) * s

        for m in (1, 3, 5):
            coeff = -1j / (2 * math.pi) * quad(lambda y: f(y) * math.sin(m * y), 0, 2 * math.pi, limit=200)[0]
            assert d.coeffs[0][0, m, 0] == pytest.approx(coeff, abs=1e-10)
        assert abs(d.coeffs[0][0, 2, 0]) < 1e-14
        assert np.max(np.abs(d.coeffs[1:])) < 1e-14

    @pytest.mark.parametrize("r", [2.0, 4.0])
    def test_dissipation_against_quadrature(self, r):
        g = make_grid(32)
        amp, b = 0.9, 2.0
        p = DampingParams(3.0, b, r)
        value = damping_dissipation(_shear(g, amp), p)
        line = quad(lambda y: math.expm1(b * abs(amp * math.sin(y)) ** r) * (amp * math.sin(y)) ** 2,
                    0, 2 * math.pi, limit=200)[0]
        assert value == pytest.approx((2 * math.pi) ** 2 * line, rel=1e-8)

    @pytest.mark.parametrize("r", [1.0, 7 / 3])
    def test_nonsmooth_exponent_converges(self, r):
        # |sin y|^r has a kink at the zeros of sin y: quadrature converges algebraically
        amp, b = 0.9, 2.0
        p = DampingParams(1.0, b, r)
        line = quad(lambda y: math.expm1(b * abs(amp * math.sin(y)) ** r) * (amp * math.sin(y)) ** 2,
                    0, 2 * math.pi, limit=200, points=[math.pi])[0]
        exact = (2 * math.pi) ** 2 * line
        errs = [abs(damping_dissipation(_shear(make_grid(n), amp), p) - exact) / exact for n in (16, 32, 64)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-5

    def test_dissipation_equals_inner_product(self):
        # <A_n[h(|u|)u], u> = a * D(u) for band-limited divergence-free u
        g = make_grid(16)
        u = init_random_divfree(g, 1, 3.0, 10.0)
        p = DampingParams(2.0, 1.0, 4.0)
        d = damping_term(u, p)
        lhs = g.volume * np.vdot(u.coeffs, d.coeffs).real
        assert lhs == pytest.approx(2.0 * damping_dissipation(u, p), rel=1e-10)

    def test_zero_amplitude(self):
        g = make_grid(8)
        assert np.all(damping_term(_shear(g, 1.0), DampingParams(0.0)).coeffs == 0)


def _vec(lo=-3.0, hi=3.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=3, max_size=3).map(np.array)


class TestLemmaGaps:
    def test_hand_values(self):
        x, y = np.array([1.0, 0, 0]), np.zeros(3)
        assert lemma2_power_gap(x, y, 1.0) == pytest.approx(0.5)
        # equality for antipodal points of equal length
        assert lemma2_power_gap(x, -x, 2.0) == pytest.approx(0.0, abs=1e-15)
        assert lemma2_gap(x, -x, DampingParams(1, 1, 4)) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
    def test_closed_form(self, beta):
        # 2 <ux - vy, x - y> - (u + v)|x - y|^2 = (u - v)(|x|^2 - |y|^2)
        rng = np.random.default_rng(3)
        x, y = rng.uniform(-1.5, 1.5, (2, 1000, 3))
        nx, ny = np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1)
        ref = 0.5 * (nx**beta - ny**beta) * (nx**2 - ny**2)
        assert np.allclose(lemma2_power_gap(x, y, beta), ref, rtol=1e-9, atol=1e-12)
        p = DampingParams(1.0, 0.7, beta)
        ref = 0.5 * (np.expm1(0.7 * nx**beta) - np.expm1(0.7 * ny**beta)) * (nx**2 - ny**2)
        assert np.allclose(lemma2_gap(x, y, p), ref, rtol=1e-9, atol=1e-12)

    def test_vectorised(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal((2, 50, 3))
        gaps = lemma2_power_gap(x, y, 2.0)
        assert gaps.shape == (50,)
        assert gaps[7] == pytest.approx(lemma2_power_gap(x[7], y[7], 2.0))

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            lemma2_power_gap(np.ones(3), np.zeros(3), 0.0)

    @settings(max_examples=300, deadline=None)
    @given(x=_vec(), y=_vec(), beta=st.sampled_from([1.0, 2.0, 4.0, 0.5]))
    def test_power_gap_nonnegative(self, x, y, beta):
        assert lemma2_power_gap(x, y, beta) >= -1e-12 * lemma2_scale(x, y, beta)

    @settings(max_examples=300, deadline=None)
    @given(x=_vec(-1.5, 1.5), y=_vec(-1.5, 1.5), r=st.sampled_from([1.0, 2.0, 4.0]), b=st.sampled_from([0.5, 1.0, 2.0]))
    def test_exp_gap_nonnegative(self, x, y, r, b):
        assert lemma2_gap(x, y, DampingParams(1.0, b, r)) >= -1e-12 * lemma2_scale(x, y, r)

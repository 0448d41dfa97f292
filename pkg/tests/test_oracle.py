import math

import numpy as np
import pytest

from dampns import DampingParams, ModeCountError, SimParams, init_random_divfree, l2_norm, make_grid, run
from dampns.nonlinearity import damping_term, transport_term
from dampns.oracle import (
    MAX_MODES,
    DenseModeSet,
    _align,
    ball_modes,
    collocated_damping,
    dense_transport,
    explicit_reference_run,
    oversampled_damping,
)


@pytest.fixture(scope="module")
def grid8():
    return make_grid(8)


def _random(grid, seed, amp):
    return init_random_divfree(grid, seed, grid.trunc_radius, amp)


class TestDenseModeSet:
    def test_round_trip(self, grid8):
        u = _random(grid8, 0, 1.0)
        m = DenseModeSet.from_field(u)
        assert np.array_equal(m.to_field(grid8).coeffs, u.coeffs)
        assert m.energy() == pytest.approx(l2_norm(u) ** 2, rel=1e-14)

    def test_needs_hermitian_partner(self):
        with pytest.raises(ValueError, match="partner"):
            DenseModeSet(np.array([[1, 0, 0]]), np.array([[0, 1.0, 0]]))

    def test_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            DenseModeSet(np.array([[1, 0, 0], [1, 0, 0]]), np.zeros((2, 3)))

    def test_cap(self):
        modes = ball_modes(5.5, 1.0)
        assert len(modes) > MAX_MODES
        with pytest.raises(ModeCountError):
            DenseModeSet(modes, np.zeros((len(modes), 3)))

    def test_empty(self):
        m = DenseModeSet.empty()
        assert len(m) == 0 and m.energy() == 0.0
        assert len(dense_transport(m, 2.0)) == 0


def test_ball_modes_match_grid_mask():
    g = make_grid(16, 2.0, 2.5)
    modes = ball_modes(2.5, 2.0)
    assert len(modes) == int(np.count_nonzero(g.trunc_mask)) - 1
    assert np.all(np.sum(modes**2, axis=1) <= (2.5 * 2.0) ** 2)


class TestTransport:
    def test_triad(self, grid8):
        m = DenseModeSet(
            np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]]),
            np.array([[0, 0.5, 0], [0, 0.5, 0], [0, 0, 0.5], [0, 0, 0.5]], dtype=complex),
        )
        out = dense_transport(m, grid8.trunc_radius).as_dict()
        assert set(out) == {(1, 1, 0), (1, -1, 0), (-1, -1, 0), (-1, 1, 0)}
        assert out[(1, 1, 0)] == pytest.approx([0, 0, 0.25j])
        assert out[(1, -1, 0)] == pytest.approx([0, 0, -0.25j])

    @pytest.mark.parametrize("L", [1.0, 2.0])
    def test_matches_production(self, L):
        g = make_grid(8, L)
        u = _random(g, 3, 5.0)
        target = ball_modes(g.trunc_radius, L)
        ref = _align(dense_transport(DenseModeSet.from_field(u), g.trunc_radius), target)
        got = _align(DenseModeSet.from_field(transport_term(u)), target)
        assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)


class TestDamping:
    @pytest.mark.parametrize("amp", [0.1, 3.0])
    def test_collocated_equals_production(self, grid8, amp):
        u = _random(grid8, 1, amp)
        p = DampingParams(1.5, 0.7, 3.0)
        target = ball_modes(grid8.trunc_radius, 1.0)
        ref = collocated_damping(DenseModeSet.from_field(u), p, 8, grid8.trunc_radius).amplitudes
        got = _align(DenseModeSet.from_field(damping_term(u, p)), target)
        assert np.max(np.abs(got - ref)) <= 1e-13 * max(1.0, np.max(np.abs(ref)))

    def test_oversampling_self_consistent(self, grid8):
        # at small amplitude the oracle is converged in the oversampling factor
        m = DenseModeSet.from_field(_random(grid8, 2, 0.3))
        p = DampingParams()
        runs = [oversampled_damping(m, p, s, 8, grid8.trunc_radius).amplitudes for s in (2, 4, 8)]
        assert np.max(np.abs(runs[1] - runs[2])) <= 1e-14
        assert np.max(np.abs(runs[0] - runs[2])) <= 1e-12

    def test_aliasing_grows_with_amplitude(self, grid8):
        # fields on |k| <= n/6: the leading |u|^4 u part aliases only weakly, the
        # higher Taylor terms of the exponential alias more as |u| grows
        p = DampingParams()
        target = ball_modes(grid8.trunc_radius, 1.0)
        errs = []
        for amp in (1.0, 10.0):
            u = init_random_divfree(grid8, 0, 8 / 6, amp)
            ref = oversampled_damping(DenseModeSet.from_field(u), p, 4, 8, grid8.trunc_radius).amplitudes
            got = _align(DenseModeSet.from_field(damping_term(u, p)), target)
            errs.append(np.linalg.norm(got - ref) / np.linalg.norm(ref))
        assert errs[0] < 1e-6
        assert errs[1] > 1e3 * errs[0]

    def test_bad_oversample(self, grid8):
        with pytest.raises(ValueError):
            oversampled_damping(DenseModeSet.empty(), DampingParams(), 3, 8, 2.0)


class TestReferenceRun:
    def test_dt_ref_bound(self, grid8):
        m = DenseModeSet.from_field(_random(grid8, 0, 0.1))
        with pytest.raises(ValueError, match="dt/16"):
            explicit_reference_run(m, SimParams(dt=1e-3, t_end=0.01), 1e-4, 8, grid8.trunc_radius)
        with pytest.raises(ValueError, match="t_end"):
            explicit_reference_run(m, SimParams(dt=1e-3, t_end=2.0), 1e-5, 8, grid8.trunc_radius)

    def test_heat_limit(self, grid8):
        u = _random(grid8, 4, 0.5)
        m = DenseModeSet.from_field(u)
        p = SimParams(nu=0.3, damping=DampingParams(0.0), dt=1e-2, t_end=0.1)
        out = explicit_reference_run(m, p, 1e-2 / 16, 8, grid8.trunc_radius)
        # transport is present, so compare with production rather than a formula
        target = ball_modes(grid8.trunc_radius, 1.0)
        got = _align(DenseModeSet.from_field(run(u, SimParams(nu=0.3, damping=DampingParams(0.0), dt=1e-3,
                                                                   t_end=0.1, scheme_order=4)).final.field), target)
        assert np.linalg.norm(got - out.amplitudes) <= 1e-10 * np.linalg.norm(out.amplitudes)

    def test_pure_viscous_decay(self, grid8):
        m = DenseModeSet(np.array([[0, 2, 0], [0, -2, 0]]), np.array([[0.5j, 0, 0], [-0.5j, 0, 0]]))
        p = SimParams(nu=1.0, damping=DampingParams(0.0), dt=1e-2, t_end=0.5)
        out = explicit_reference_run(m, p, 1e-2 / 16, 8, grid8.trunc_radius).as_dict()
        assert out[(0, 2, 0)][0] == pytest.approx(0.5j * math.exp(-4 * 0.5), rel=1e-10)

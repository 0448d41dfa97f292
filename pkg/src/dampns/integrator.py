"""Time integration of the truncated, projected system.

The state obeys ``u' = -nu |k|^2 u + N(u)`` with
``N(u) = -A_n div(u (x) u) - A_n[a (exp(b|u|^r) - 1) u]``.  The viscous part is
integrated exactly through the multiplier ``exp(-nu |k|^2 h)``; ``N`` is
advanced by an explicit Runge-Kutta scheme of order 2 (Heun) or 4 (classical)
written in integrating-factor form.  Dissipation rates are accumulated with
the same stage weights, so the ledger residual measures time-stepping error
only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NonFiniteState, OverflowRisk
from .ledger import EnergyLedger, LedgerRow
from .nonlinearity import DEFAULT_CLIP, ClipPolicy, DampingParams, band_terms
from .spectral import Grid, SpectralVectorField, _project, a_n_operator, l2_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimParams:
    nu: float = 1.0
    damping: DampingParams = field(default_factory=DampingParams)
    dt: float = 1e-3
    t_end: float = 1.0
    output_every: int = 1
    scheme_order: int = 2
    clip: ClipPolicy = DEFAULT_CLIP
    # bound on dt * a * (exp(b v_obs^r) - 1); larger steps are sub-stepped
    damping_cfl: float = 0.5
    # refuse (rather than crawl through) steps needing more sub-steps than this
    max_substeps: int = 10_000

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.output_every) != self.output_every or self.output_every < 1:
            raise ValueError(f"output_every must be a positive integer, got {self.output_every}")
        if self.scheme_order not in (2, 4):
            raise ValueError(f"scheme_order must be 2 or 4, got {self.scheme_order}")
        if not self.damping_cfl > 0:
            raise ValueError(f"damping_cfl must be positive, got {self.damping_cfl}")
        if int(self.max_substeps) != self.max_substeps or self.max_substeps < 1:
            raise ValueError(f"max_substeps must be a positive integer, got {self.max_substeps}")
        self.clip.resolve(self.damping)


@dataclass(frozen=True)
class SolverState:
    time: float
    field: SpectralVectorField
    saturation_count: int = 0


class RunResult(NamedTuple):
    final: SolverState
    ledger: EnergyLedger
    snapshots: list  # (time, SpectralVectorField) pairs


@dataclass
class _Stage:
    rhs: np.ndarray
    visc_rate: float  # 2 nu ||grad u||^2
    damp_rate: float  # 2 a D(u)
    max_speed: float
    saturated: int


def _evaluate(c: np.ndarray, grid: Grid, p: SimParams) -> _Stage:
    terms = band_terms(c, grid, p.damping, p.clip)
    return _Stage(
        rhs=-(terms.transport + terms.damping),
        visc_rate=2.0 * p.nu * grid.band.gradient_energy(c),
        damp_rate=2.0 * p.damping.a * terms.dissipation,
        max_speed=terms.max_speed,
        saturated=terms.saturated,
    )


def rhs_nonlinear(u: SpectralVectorField, p: SimParams) -> SpectralVectorField:
    """``-transport_term(u) - damping_term(u)``."""
    band = u.grid.band
    rhs = _evaluate(band.gather(u.coeffs), u.grid, p).rhs
    return SpectralVectorField(band.to_full(rhs), u.grid, True)


class _Stepper:
    """Integrating-factor RK on band coefficients for one grid/parameter set."""

    def __init__(self, grid: Grid, p: SimParams):
        self.grid = grid
        self.p = p
        self._factors: dict[float, np.ndarray] = {}

    def factor(self, h: float) -> np.ndarray:
        e = self._factors.get(h)
        if e is None:
            e = np.exp(-self.p.nu * self.grid.band.k2 * h)
            if len(self._factors) > 8:
                self._factors.clear()
            self._factors[h] = e
        return e

    def substeps(self, first: _Stage, dt: float) -> int:
        p = self.p
        if not p.damping.active:
            return 1
        v = min(first.max_speed, p.clip.resolve(p.damping))
        stiffness = float(p.damping.h(v))
        n = max(1, math.ceil(dt * stiffness / p.damping_cfl - 1e-12))
        if n > p.max_substeps:
            raise OverflowRisk(
                f"speed {v:.4g} makes the damping stiff: dt={dt:g} would need {n} sub-steps "
                f"(max_substeps={p.max_substeps}); lower dt or clip.v_max",
                speed=v,
            )
        return n

    def advance(self, c: np.ndarray, dt: float):
        """Advance by ``dt``; returns ``(c, visc_inc, damp_inc, saturations)``."""
        first = _evaluate(c, self.grid, self.p)
        n_sub = self.substeps(first, dt)
        if n_sub > 1:
            log.debug("damping guard: splitting dt=%g into %d sub-steps", dt, n_sub)
        h = dt / n_sub
        visc = damp = 0.0
        sat = 0
        for i in range(n_sub):
            stage = first if i == 0 else _evaluate(c, self.grid, self.p)
            c, dv, dd, ds = self._single(c, h, stage)
            visc += dv
            damp += dd
            sat += ds
        return c, visc, damp, sat

    def _single(self, u, h, s1: _Stage):
        grid, p = self.grid, self.p
        e = self.factor(h)
        if p.scheme_order == 2:
            u2 = e * (u + h * s1.rhs)
            s2 = _evaluate(u2, grid, p)
            new = e * u + 0.5 * h * (e * s1.rhs + s2.rhs)
            stages, weights = (s1, s2), (0.5, 0.5)
        else:
            e2 = self.factor(0.5 * h)
            u2 = e2 * (u + 0.5 * h * s1.rhs)
            s2 = _evaluate(u2, grid, p)
            u3 = e2 * u + 0.5 * h * s2.rhs
            s3 = _evaluate(u3, grid, p)
            u4 = e * u + h * e2 * s3.rhs
            s4 = _evaluate(u4, grid, p)
            new = e * u + (h / 6.0) * (e * s1.rhs + 2.0 * e2 * (s2.rhs + s3.rhs) + s4.rhs)
            stages, weights = (s1, s2, s3, s4), (1 / 6, 1 / 3, 1 / 3, 1 / 6)
        visc = h * sum(w * s.visc_rate for w, s in zip(weights, stages))
        damp = h * sum(w * s.damp_rate for w, s in zip(weights, stages))
        # every collocation point clipped at any stage counts once per stage
        sat = sum(s.saturated for s in stages)
        return new, visc, damp, sat


def _check_finite(coeffs: np.ndarray, time: float, ledger=None):
    if not np.all(np.isfinite(coeffs)):
        raise NonFiniteState(f"non-finite coefficients at t={time:.6g}", time=time, ledger=ledger)


def _validate_initial(u0: SpectralVectorField, tol: float = 1e-10) -> SpectralVectorField:
    grid = u0.grid
    scale = max(1.0, float(np.max(np.abs(u0.coeffs), initial=0.0)))
    if u0.divergence_defect() > tol * scale:
        raise ValueError("initial field is not divergence-free")
    if np.any(np.abs(u0.coeffs[:, 0, 0, 0]) > tol * scale):
        raise ValueError("initial field has a nonzero mean mode")
    total = float(np.sum(np.abs(u0.coeffs) ** 2))
    if u0.outside_ball_energy() > tol**2 * max(total, 1e-300):
        raise ValueError("initial field is not band-limited to the truncation ball")
    if u0.hermitian_defect() > tol * scale:
        raise ValueError("initial field is not Hermitian-symmetric (not a real field)")
    return a_n_operator(u0)


def step(s: SolverState, p: SimParams) -> SolverState:
    """One integrating-factor RK step of size ``p.dt`` (sub-stepped if needed)."""
    grid = s.field.grid
    band = grid.band
    c, _, _, sat = _Stepper(grid, p).advance(band.gather(s.field.coeffs), p.dt)
    t = s.time + p.dt
    _check_finite(c, t)
    return SolverState(t, SpectralVectorField(band.to_full(c), grid, True), s.saturation_count + sat)


def run(u0: SpectralVectorField, p: SimParams, snapshot_every: int = 0) -> RunResult:
    """Integrate from ``t=0`` to ``p.t_end``.

    A ledger row is written at ``t=0``, every ``p.output_every`` steps, and at
    the final time.  ``snapshot_every > 0`` also stores the field at that step
    cadence (plus the initial and final fields).
    """
    u = _validate_initial(u0)
    grid = u.grid
    band = grid.band
    stepper = _Stepper(grid, p)
    n_steps = max(1, math.ceil(p.t_end / p.dt - 1e-9))

    coeffs = band.gather(u.coeffs)
    e0 = band.energy(coeffs)
    visc = damp = 0.0
    sat = 0
    ledger = EnergyLedger([LedgerRow(0.0, e0, 0.0, 0.0, 0.0, 0)])
    snapshots = [(0.0, u)] if snapshot_every else []

    t = 0.0
    for i in range(1, n_steps + 1):
        t_next = min(i * p.dt, p.t_end)
        coeffs, dv, dd, ds = stepper.advance(coeffs, t_next - t)
        t = t_next
        _check_finite(coeffs, t, ledger)
        visc += dv
        damp += dd
        sat += ds
        last = i == n_steps
        if i % p.output_every == 0 or last:
            e = band.energy(coeffs)
            ledger.append(LedgerRow(t, e, visc, damp, e0 - e - visc - damp, sat))
        if snapshot_every and (i % snapshot_every == 0 or last):
            snapshots.append((t, SpectralVectorField(band.to_full(coeffs), grid, True)))

    final = SolverState(t, SpectralVectorField(band.to_full(coeffs), grid, True), sat)
    return RunResult(final, ledger, snapshots)


# -- initial data -----------------------------------------------------------

def init_taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralVectorField:
    """``A (sin X cos Y cos Z, -cos X sin Y cos Z, 0)`` with ``X = x/L``.

    Coefficients are assigned exactly on the eight modes ``(+-1, +-1, +-1)/L``.
    """
    if math.sqrt(3.0) / grid.box_scale > grid.trunc_radius * (1 + 1e-12):
        raise ValueError("Taylor-Green modes |k| = sqrt(3)/L lie outside the truncation ball")
    coeffs = np.zeros((3,) + grid.shape, dtype=complex)
    n = grid.n_points
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                idx = (sx % n, sy % n, sz % n)
                coeffs[0][idx] = -1j * sx * amplitude / 8.0
                coeffs[1][idx] = 1j * sy * amplitude / 8.0
    return SpectralVectorField(coeffs, grid, True)


def init_random_divfree(grid: Grid, seed: int, spectrum_cutoff: float,
                        amplitude: float) -> SpectralVectorField:
    """Seeded Gaussian field on ``|k| <= cutoff`` rescaled to ``l2_norm == amplitude``."""
    if not spectrum_cutoff <= grid.trunc_radius * (1 + 1e-12):
        raise ValueError(f"cutoff {spectrum_cutoff} exceeds trunc_radius {grid.trunc_radius}")
    rng = np.random.default_rng(seed)
    shape = (3,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c *= grid.ball_mask(spectrum_cutoff)
    neg = grid.negate_index
    c = 0.5 * (c + np.conj(c[:, neg][:, :, neg][:, :, :, neg]))
    c = _project(c, grid)
    field_ = SpectralVectorField(c, grid, True)
    norm = l2_norm(field_)
    if norm == 0.0:
        if amplitude == 0:
            return field_
        raise ValueError("no admissible modes below the cutoff")
    return field_ * (amplitude / norm)

"""Energy-law checks, paired-run stability, decay probes and flux splitting."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyLedger, GridError, InvariantViolation
from .integrator import SimParams, run
from .ledger import EnergyLedger
from .nonlinearity import DampingParams
from .spectral import (
    PhysicalVectorField,
    SpectralVectorField,
    homogeneous_sobolev_norm,
    inverse_transform,
    l2_norm,
    low_pass,
    lp_norm,
    sobolev_norm,
)

# slack on consecutive energies, relative to E(0)
MONOTONE_SLACK = 1e-10


@dataclass
class EnergyCheck:
    passed: bool
    worst_row: int  # index of the row with the most negative residual margin
    worst_residual: float  # residual / E(0) at that row
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_row": self.worst_row,
            "worst_residual_rel": self.worst_residual,
            "violations": self.violations,
        }


def verify_energy(ledger: EnergyLedger, tol: float) -> EnergyCheck:
    """Check ``residual >= -tol E(0)`` and monotone energy on every row."""
    if len(ledger) == 0:
        raise EmptyLedger("ledger has no rows")
    e0 = ledger.initial_energy
    scale = e0 if e0 > 0 else 1.0
    violations = []
    rel = [r.residual / scale if math.isfinite(r.residual) else -math.inf for r in ledger]
    worst = int(np.argmin(rel))
    for i, r in enumerate(ledger):
        if not all(math.isfinite(v) for v in (r.t, r.energy, r.visc_cum, r.damp_cum, r.residual)):
            violations.append(f"row {i} (t={r.t:.6g}): non-finite entry")
            continue
        if abs(e0 - r.energy - r.visc_cum - r.damp_cum - r.residual) > 1e-9 * scale:
            violations.append(f"row {i} (t={r.t:.6g}): residual column inconsistent with the other columns")
        if r.residual < -tol * e0:
            violations.append(f"row {i} (t={r.t:.6g}): energy inequality violated, residual {r.residual:.3e}")
        if i and r.energy > ledger[i - 1].energy + MONOTONE_SLACK * e0:
            violations.append(
                f"row {i} (t={r.t:.6g}): energy increased from {ledger[i - 1].energy:.12g} to {r.energy:.12g}"
            )
    return EnergyCheck(not violations, worst, rel[worst], violations)


@dataclass
class StabilityReport:
    times: list[float]
    w_norm_sq: list[float]
    bound: list[float]
    margin: list[float]

    @property
    def initial(self) -> float:
        return self.w_norm_sq[0] if self.w_norm_sq else 0.0

    def worst_margin(self) -> float:
        return min(self.margin, default=0.0)

    def holds(self, rel_tol: float = 1e-8) -> bool:
        return self.worst_margin() >= -rel_tol * self.initial

    def rows(self):
        return zip(self.times, self.w_norm_sq, self.bound, self.margin)


def gronwall_rate(p: DampingParams) -> float:
    """Exponent ``4/(ab)`` of the stability bound ``||w(0)||^2 exp(4t/(ab))``."""
    if not p.active:
        return math.inf
    return 4.0 / (p.a * p.b)


def stability_experiment(u0: SpectralVectorField, delta: SpectralVectorField, p: SimParams,
                         concurrent: bool = True) -> StabilityReport:
    """Run ``u0`` and ``u0 + delta`` side by side and compare ``||u - v||^2`` to the bound."""
    v0 = u0 + delta
    if concurrent:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fu = pool.submit(run, u0, p, p.output_every)
            fv = pool.submit(run, v0, p, p.output_every)
            ru, rv = fu.result(), fv.result()
    else:
        ru, rv = run(u0, p, p.output_every), run(v0, p, p.output_every)
    rate = gronwall_rate(p.damping)
    times, wsq, bound, margin = [], [], [], []
    w0 = None
    for (t, u), (_, v) in zip(ru.snapshots, rv.snapshots):
        w = l2_norm(u - v) ** 2
        if w0 is None:
            w0 = w
        b = w0 * math.exp(rate * t) if math.isfinite(rate) else math.inf
        times.append(t)
        wsq.append(w)
        bound.append(b)
        margin.append(b - w)
    return StabilityReport(times, wsq, bound, margin)


@dataclass
class DecayRow:
    t: float
    l2: float
    h_neg2: float
    w1_l2: float
    w2_l2: float
    lp_10_3: float
    damping_flux_l1: float
    k1: float
    k2: float
    h_dot_3_5: float
    h_dot_1: float


@dataclass
class DecayReport:
    kappa: float
    rows: list[DecayRow]

    @property
    def times(self):
        return [r.t for r in self.rows]

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def split_defects(self) -> list[float]:
        """``|l2^2 - w1^2 - w2^2| / l2^2`` per row (0 for a zero field)."""
        out = []
        for r in self.rows:
            total = r.l2**2
            out.append(abs(total - r.w1_l2**2 - r.w2_l2**2) / total if total > 0 else 0.0)
        return out

    def low_frequency_margins(self) -> list[float]:
        """``(1 + kappa^2) ||u||_{H^-2} - ||w1||`` per row; must be >= 0."""
        factor = 1.0 + self.kappa**2
        return [factor * r.h_neg2 - r.w1_l2 for r in self.rows]

    def interpolation_margins(self) -> list[float]:
        """``l2^(2/5) |u|_{1}^(3/5) - |u|_{3/5}`` per row; must be >= 0."""
        return [r.l2**0.4 * r.h_dot_1**0.6 - r.h_dot_3_5 for r in self.rows]

    def checks(self, split_tol: float = 1e-10) -> dict:
        lf = self.low_frequency_margins()
        interp = self.interpolation_margins()
        return {
            "orthogonal_split": max(self.split_defects(), default=0.0) <= split_tol,
            "low_frequency_bound": all(m >= -1e-12 * max(1.0, r.h_neg2) for m, r in zip(lf, self.rows)),
            "interpolation": all(m >= -1e-12 * max(1.0, r.h_dot_3_5) for m, r in zip(interp, self.rows)),
        }


def k1k2_split(f: PhysicalVectorField, p: DampingParams, level: float = 1.0) -> tuple[float, float]:
    """Quadrature of ``(exp(b|u|^r) - 1)|u|`` over ``{|u| <= level}`` and its complement."""
    speed = f.speed()
    integrand = np.expm1(p.b * speed**p.r) * speed
    low = speed <= level
    dv = f.grid.cell_volume
    return dv * float(np.sum(integrand[low])), dv * float(np.sum(integrand[~low]))


def damping_flux_l1(f: PhysicalVectorField, p: DampingParams) -> float:
    speed = f.speed()
    return f.grid.cell_volume * float(np.sum(np.expm1(p.b * speed**p.r) * speed))


def decay_probe(snapshots, kappa: float, p: DampingParams, check: bool = True) -> DecayReport:
    """Norms of each ``(t, field)`` snapshot, with the split at ``|k| = kappa``.

    With ``check`` set, a snapshot where ``||w1|| > (1 + kappa^2) ||u||_{H^-2}``
    raises ``InvariantViolation``.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    rows = []
    grid = None
    for t, u in snapshots:
        if grid is None:
            grid = u.grid
        elif u.grid != grid:
            raise GridError("decay_probe snapshots live on different grids")
        w1 = low_pass(u, kappa)
        phys = inverse_transform(u)
        k1, k2 = k1k2_split(phys, p)
        rows.append(
            DecayRow(
                t=float(t),
                l2=l2_norm(u),
                h_neg2=sobolev_norm(u, -2.0),
                w1_l2=l2_norm(w1),
                w2_l2=l2_norm(u - w1),
                lp_10_3=lp_norm(phys, 10.0 / 3.0),
                damping_flux_l1=damping_flux_l1(phys, p),
                k1=k1,
                k2=k2,
                h_dot_3_5=homogeneous_sobolev_norm(u, 0.6),
                h_dot_1=homogeneous_sobolev_norm(u, 1.0),
            )
        )
    report = DecayReport(kappa, rows)
    if check:
        for r, m in zip(rows, report.low_frequency_margins()):
            if m < -1e-12 * max(1.0, r.h_neg2):
                raise InvariantViolation(
                    f"t={r.t:.6g}: ||w1||={r.w1_l2:.6e} exceeds (1+kappa^2)||u||_H-2={r.w1_l2 + m:.6e}"
                )
    return report


def half_life(ledger: EnergyLedger) -> float:
    """First time ``||u||_{L^2}`` falls to half its initial value (``E`` to a quarter).

    Linear interpolation between ledger rows; ``nan`` if it never does.
    """
    if len(ledger) == 0:
        raise EmptyLedger("ledger has no rows")
    target = 0.25 * ledger.initial_energy
    prev = ledger[0]
    for r in ledger.rows[1:]:
        if r.energy <= target:
            if prev.energy == r.energy:
                return r.t
            frac = (prev.energy - target) / (prev.energy - r.energy)
            return prev.t + frac * (r.t - prev.t)
        prev = r
    return math.nan


# -- pointwise inequalities ---------------------------------------------------

@dataclass
class GapResult:
    kind: str  # "power" or "exp"
    exponent: float  # beta or r
    b: float | None
    min_gap: float
    min_normalized_gap: float  # min of gap / (1+|x|+|y|)^(exponent+2)
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lemma2_property_check(samples: int = 1_000_000, seed: int = 42, radius: float = 1.5,
                          betas=(1.0, 2.0, 4.0), rs=(1.0, 2.0, 4.0), bs=(0.5, 1.0, 2.0),
                          tol: float = 1e-12, batch: int = 250_000) -> list[GapResult]:
    """Sample pairs uniformly in the ball ``|x|, |y| <= radius`` and evaluate both gaps.

    The ball keeps ``exp(b|x|^r)`` small enough that round-off in the gap
    stays far below ``tol * (1+|x|+|y|)^(r+2)``.
    """
    from .nonlinearity import lemma2_gap, lemma2_power_gap, lemma2_scale

    rng = np.random.default_rng(seed)
    cases = [("power", beta, None) for beta in betas] + [("exp", r, b) for r in rs for b in bs]
    worst = {c: [math.inf, math.inf] for c in cases}
    remaining = samples
    while remaining > 0:
        m = min(batch, remaining)
        remaining -= m
        x, y = (_uniform_ball(rng, m, radius) for _ in range(2))
        for case in cases:
            kind, e, b = case
            gap = lemma2_power_gap(x, y, e) if kind == "power" else lemma2_gap(x, y, DampingParams(1.0, b, e))
            norm = gap / lemma2_scale(x, y, e)
            w = worst[case]
            w[0] = min(w[0], float(np.min(gap)))
            w[1] = min(w[1], float(np.min(norm)))
    return [GapResult(k, e, b, g, n, n >= -tol) for (k, e, b), (g, n) in worst.items()]


def _uniform_ball(rng, m: int, radius: float) -> np.ndarray:
    d = rng.standard_normal((m, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(m) ** (1.0 / 3.0))[:, None]


def k1_scalar_margin(b: float = 1.0, points: int = 10_000) -> float:
    """Min over ``z`` in ``[0, 1]`` of ``b e^b z^(10/3) - (exp(b z^4) - 1) z``.

    This scalar inequality integrates to ``K1 <= b e^b ||u||_{L^(10/3)}^(10/3)``
    for ``r = 4`` on fields bounded by 1.
    """
    z = np.linspace(0.0, 1.0, points)
    return float(np.min(b * math.exp(b) * z ** (10.0 / 3.0) - np.expm1(b * z**4) * z))

"""Slow reference implementations used to validate the spectral kernels.

Everything here works on an explicit list of Fourier modes.  Transport is a
direct double sum over mode pairs, damping is evaluated either by explicit DFT
sums at the collocation points or on an oversampled grid, and time stepping is
plain classical RK4 with the viscous term treated explicitly.  None of it
shares code with the production path beyond the grid/field containers.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ModeCountError, NonFiniteState
from .integrator import SimParams
from .nonlinearity import DEFAULT_CLIP, ClipPolicy, DampingParams
from .spectral import Grid, SpectralVectorField

MAX_MODES = 500


@dataclass(frozen=True, eq=False)
class DenseModeSet:
    """Explicit ``(k, amplitude)`` pairs; ``k`` in integer lattice units."""

    modes: np.ndarray  # (M, 3) int
    amplitudes: np.ndarray  # (M, 3) complex
    box_scale: float = 1.0

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=int).reshape(-1, 3)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1, 3)
        if modes.shape[0] != amps.shape[0]:
            raise ValueError("modes and amplitudes differ in length")
        if modes.shape[0] > MAX_MODES:
            raise ModeCountError(f"{modes.shape[0]} modes exceeds the cap of {MAX_MODES}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "amplitudes", amps)
        lookup = self.as_dict()
        if len(lookup) != len(modes):
            raise ValueError("duplicate modes")
        for k, amp in lookup.items():
            partner = lookup.get(tuple(-v for v in k))
            if partner is None or np.max(np.abs(partner - np.conj(amp))) > 1e-12 * max(1.0, np.max(np.abs(amp))):
                raise ValueError(f"mode {k} lacks its Hermitian partner")

    def __len__(self):
        return self.modes.shape[0]

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.modes / self.box_scale

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in k): a for k, a in zip(self.modes, self.amplitudes)}

    @classmethod
    def empty(cls, box_scale: float = 1.0) -> DenseModeSet:
        return cls(np.zeros((0, 3), dtype=int), np.zeros((0, 3), dtype=complex), box_scale)

    @classmethod
    def from_field(cls, g: SpectralVectorField) -> DenseModeSet:
        """Collect every nonzero coefficient of a spectral field."""
        grid = g.grid
        nz = np.argwhere(np.any(g.coeffs != 0, axis=0))
        modes = [grid.index_vectors[(slice(None),) + tuple(idx)] for idx in nz]
        amps = [g.coeffs[(slice(None),) + tuple(idx)] for idx in nz]
        if not modes:
            return cls.empty(grid.box_scale)
        return cls(np.array(modes), np.array(amps), grid.box_scale)

    def to_field(self, grid: Grid) -> SpectralVectorField:
        if not math.isclose(grid.box_scale, self.box_scale):
            raise ValueError("box scale mismatch")
        coeffs = np.zeros((3,) + grid.shape, dtype=complex)
        n = grid.n_points
        for k, a in zip(self.modes, self.amplitudes):
            if np.any(np.abs(k) >= n / 2):
                raise ValueError(f"mode {tuple(k)} does not fit on an n={n} grid")
            coeffs[(slice(None),) + tuple(k % n)] = a
        return SpectralVectorField(coeffs, grid)

    def energy(self) -> float:
        """``||u||_{L^2}^2`` on the box of side ``2 pi L``."""
        return (2 * np.pi * self.box_scale) ** 3 * float(np.sum(np.abs(self.amplitudes) ** 2))


def ball_modes(radius: float, box_scale: float) -> np.ndarray:
    """All nonzero integer vectors with ``|k|/L <= radius``, sorted."""
    m = int(math.floor(radius * box_scale + 1e-9))
    bound = (radius * box_scale) ** 2 * (1 + 1e-12)
    out = []
    for i in range(-m, m + 1):
        for j in range(-m, m + 1):
            for k in range(-m, m + 1):
                if 0 < i * i + j * j + k * k <= bound:
                    out.append((i, j, k))
    return np.array(out, dtype=int).reshape(-1, 3)


def _project_rows(k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply ``I - k k^T/|k|^2`` row by row (``k`` nonzero)."""
    k2 = np.sum(k * k, axis=1)
    kv = np.sum(k * v, axis=1)
    return v - k * (kv / k2)[:, None]


class _ConvolutionPlan:
    """Pair bookkeeping for the direct sum ``sum_{p+q=k} ...`` onto a target set."""

    def __init__(self, source: np.ndarray, target: np.ndarray):
        index = {tuple(k): i for i, k in enumerate(target)}
        ps, qs, ks = [], [], []
        for ip, p in enumerate(source):
            for iq, q in enumerate(source):
                j = index.get((p[0] + q[0], p[1] + q[1], p[2] + q[2]))
                if j is not None:
                    ps.append(ip)
                    qs.append(iq)
                    ks.append(j)
        self.p = np.array(ps, dtype=int)
        self.q = np.array(qs, dtype=int)
        self.k = np.array(ks, dtype=int)
        self.n_target = len(target)

    def divergence_of_products(self, amps: np.ndarray, target_k: np.ndarray) -> np.ndarray:
        """``i sum_{p+q=k} a(p) (k . a(q))`` for each target ``k``."""
        kq = np.sum(target_k[self.k] * amps[self.q], axis=1)
        contrib = 1j * amps[self.p] * kq[:, None]
        out = np.zeros((self.n_target, 3), dtype=complex)
        for i in range(3):
            out[:, i] = np.bincount(self.k, weights=contrib[:, i].real, minlength=self.n_target) + 1j * np.bincount(
                self.k, weights=contrib[:, i].imag, minlength=self.n_target
            )
        return out


def dense_transport(m: DenseModeSet, radius: float) -> DenseModeSet:
    """Truncated, projected ``div(u (x) u)`` by direct convolution.

    Only modes with a nonzero result are returned.
    """
    if len(m) == 0:
        return DenseModeSet.empty(m.box_scale)
    target = ball_modes(radius, m.box_scale)
    plan = _ConvolutionPlan(m.modes, target)
    kphys = target / m.box_scale
    out = _project_rows(kphys, plan.divergence_of_products(m.amplitudes, kphys))
    keep = np.any(out != 0, axis=1)
    return DenseModeSet(target[keep], out[keep], m.box_scale)


def _pointwise_damping(u: np.ndarray, p: DampingParams, clip: ClipPolicy) -> np.ndarray:
    # u has shape (points, 3)
    v_max = clip.resolve(p)
    speed = np.linalg.norm(u, axis=1)
    capped = np.minimum(speed, v_max)
    scale = np.ones_like(speed)
    big = speed > v_max
    scale[big] = v_max / speed[big]
    return p.a * (np.expm1(p.b * capped**p.r) * scale)[:, None] * u


def _dft_matrix(modes: np.ndarray, n: int) -> np.ndarray:
    """``exp(i k . x_j)`` at the collocation points of an ``n^3`` grid."""
    j = np.arange(n)
    pts = np.stack(np.meshgrid(j, j, j, indexing="ij"), axis=-1).reshape(-1, 3)
    return np.exp(2j * np.pi * (pts @ modes.T) / n)


def collocated_damping(m: DenseModeSet, p: DampingParams, n_points: int, radius: float,
                       clip: ClipPolicy = DEFAULT_CLIP) -> DenseModeSet:
    """Damping term by explicit DFT sums on the ``n_points^3`` collocation grid.

    Returns every ball mode (zeros included), in ``ball_modes`` order.
    """
    target = ball_modes(radius, m.box_scale)
    if len(m) == 0:
        return DenseModeSet(target, np.zeros((len(target), 3), dtype=complex), m.box_scale)
    u = np.real(_dft_matrix(m.modes, n_points) @ m.amplitudes)
    g = _pointwise_damping(u, p, clip)
    coeffs = _dft_matrix(target, n_points).conj().T @ g / n_points**3
    return DenseModeSet(target, _project_rows(target / m.box_scale, coeffs), m.box_scale)


def oversampled_damping(m: DenseModeSet, p: DampingParams, oversample: int, n_points: int,
                        radius: float, clip: ClipPolicy = DEFAULT_CLIP) -> DenseModeSet:
    """Damping term evaluated on an ``oversample * n_points`` grid.

    Returns every ball mode (zeros included), in ``ball_modes`` order.  The
    difference from the collocated production term is the aliasing error of
    the ``n_points`` grid.
    """
    if oversample not in (2, 4, 8):
        raise ValueError(f"oversample must be 2, 4 or 8, got {oversample}")
    nf = oversample * n_points
    target = ball_modes(radius, m.box_scale)
    full = np.zeros((3, nf, nf, nf), dtype=complex)
    for k, a in zip(m.modes, m.amplitudes):
        full[(slice(None),) + tuple(k % nf)] = a
    u = np.real(np.fft.ifftn(full, axes=(1, 2, 3), norm="forward"))
    g = _pointwise_damping(u.reshape(3, -1).T, p, clip).T.reshape(u.shape)
    gh = np.fft.fftn(g, axes=(1, 2, 3), norm="forward")
    coeffs = np.array([gh[(slice(None),) + tuple(k % nf)] for k in target]).reshape(-1, 3)
    return DenseModeSet(target, _project_rows(target / m.box_scale, coeffs), m.box_scale)


def _align(m: DenseModeSet, target: np.ndarray) -> np.ndarray:
    lookup = m.as_dict()
    return np.array([lookup.get(tuple(int(v) for v in k), np.zeros(3, dtype=complex)) for k in target]).reshape(-1, 3)


def explicit_reference_run(m: DenseModeSet, p: SimParams, dt_ref: float, n_points: int,
                           radius: float) -> DenseModeSet:
    """Classical RK4 on the ball modes with every term explicit.

    Transport is the direct convolution, damping the explicit-DFT collocation
    on the same ``n_points`` grid as production, viscosity ``-nu |k|^2 u``.
    ``dt_ref`` must not exceed ``p.dt / 16``.
    """
    if dt_ref > p.dt / 16 * (1 + 1e-12):
        raise ValueError(f"dt_ref={dt_ref} exceeds dt/16={p.dt / 16}")
    if p.t_end > 1.0 + 1e-12:
        raise ValueError("reference runs are limited to t_end <= 1")
    target = ball_modes(radius, m.box_scale)
    if len(target) > MAX_MODES:
        raise ModeCountError(f"{len(target)} ball modes exceeds the cap of {MAX_MODES}")
    kphys = target / m.box_scale
    k2 = np.sum(kphys**2, axis=1)
    plan = _ConvolutionPlan(target, target)
    dft = _dft_matrix(target, n_points)
    dft_h = dft.conj().T / n_points**3

    def rhs(a):
        transport = _project_rows(kphys, plan.divergence_of_products(a, kphys))
        out = -p.nu * k2[:, None] * a - transport
        if p.damping.active:
            u = np.real(dft @ a)
            out -= _project_rows(kphys, dft_h @ _pointwise_damping(u, p.damping, p.clip))
        return out

    a = _align(m, target)
    n_steps = max(1, math.ceil(p.t_end / dt_ref - 1e-9))
    h = p.t_end / n_steps
    for i in range(n_steps):
        k1 = rhs(a)
        k2_ = rhs(a + 0.5 * h * k1)
        k3 = rhs(a + 0.5 * h * k2_)
        k4 = rhs(a + h * k3)
        a = a + (h / 6.0) * (k1 + 2 * k2_ + 2 * k3 + k4)
        if not np.all(np.isfinite(a)):
            raise NonFiniteState(f"reference run blew up at t={(i + 1) * h:.6g}", time=(i + 1) * h)
    return DenseModeSet(target, a, m.box_scale)


@dataclass
class OracleComparison:
    """Worst relative discrepancies over the seeds (``||diff|| / ||reference||``)."""

    seeds: list[int]
    transport: float
    full_rhs: float
    endpoint: float
    thresholds: tuple[float, float, float] = (1e-12, 1e-6, 1e-6)

    @property
    def passed(self) -> bool:
        return all(v <= t for v, t in zip((self.transport, self.full_rhs, self.endpoint), self.thresholds))

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "transport_rel": self.transport,
            "full_rhs_rel": self.full_rhs,
            "endpoint_rel": self.endpoint,
            "thresholds": list(self.thresholds),
            "passed": self.passed,
        }


def _rel(diff: np.ndarray, ref: np.ndarray) -> float:
    den = float(np.linalg.norm(ref))
    num = float(np.linalg.norm(diff))
    return num / den if den > 0 else num


def compare_with_oracles(grid: Grid, p: SimParams, seeds, amplitude: float, oversample: int = 4,
                         t_end: float = 0.1, endpoint_seeds: int | None = 1) -> OracleComparison:
    """Production kernels against the dense references on seeded random fields.

    Fields fill the whole truncation ball and are scaled to ``||u||_{L^2} =
    amplitude``.  The endpoint comparison (the slow part) uses the first
    ``endpoint_seeds`` seeds, all of them when ``None``.
    """
    from .integrator import init_random_divfree, rhs_nonlinear, run
    from .nonlinearity import transport_term

    seeds = [int(s) for s in seeds]
    radius = grid.trunc_radius
    target = ball_modes(radius, grid.box_scale)
    if len(target) > MAX_MODES:
        raise ModeCountError(f"{len(target)} ball modes exceeds the cap of {MAX_MODES}; use a smaller grid")
    worst_t = worst_r = worst_e = 0.0
    p_run = dataclasses.replace(p, t_end=t_end, output_every=max(1, round(t_end / p.dt)))
    n_end = len(seeds) if endpoint_seeds is None else min(endpoint_seeds, len(seeds))
    for i, seed in enumerate(seeds):
        u = init_random_divfree(grid, seed, radius, amplitude)
        m = DenseModeSet.from_field(u)
        ref_t = _align(dense_transport(m, radius), target)
        got_t = _align(DenseModeSet.from_field(transport_term(u)), target)
        worst_t = max(worst_t, _rel(got_t - ref_t, ref_t))

        ref_r = -ref_t
        if p.damping.active:
            ref_r = ref_r - oversampled_damping(m, p.damping, oversample, grid.n_points, radius, p.clip).amplitudes
        got_r = _align(DenseModeSet.from_field(rhs_nonlinear(u, p)), target)
        worst_r = max(worst_r, _rel(got_r - ref_r, ref_r))

        if i < n_end:
            ref_e = explicit_reference_run(m, p_run, p_run.dt / 16, grid.n_points, radius).amplitudes
            got_e = _align(DenseModeSet.from_field(run(u, p_run).final.field), target)
            worst_e = max(worst_e, _rel(got_e - ref_e, ref_e))
    return OracleComparison(seeds, worst_t, worst_r, worst_e)

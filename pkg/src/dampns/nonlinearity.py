"""Exponential damping, dealiased transport, and the monotonicity gaps.

The damping force is ``a * (exp(b |u|^r) - 1) * u``.  It is evaluated by
collocation on the physical grid without dealiasing; the transport term
``div(u (x) u)`` is alias-free because the Friedrichs radius sits inside the
2/3 zone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OverflowRisk
from .spectral import Grid, SpectralVectorField, _to_physical

# Largest exponent fed to exp(); exp(700) ~ 1e304 is still finite.
EXP_CEILING = 700.0
# Amplitudes at or below this take the no-damping path.
ZERO_AMPLITUDE = 1e-30


@dataclass(frozen=True)
class DampingParams:
    a: float = 1.0
    b: float = 1.0
    r: float = 4.0

    def __post_init__(self):
        # a = 0 is admitted: it switches the damping off (heat/NS limit).
        if not self.a >= 0:
            raise ValueError(f"damping amplitude a must be >= 0, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"damping rate b must be > 0, got {self.b}")
        if not self.r >= 1:
            raise ValueError(f"exponent r must be >= 1, got {self.r}")

    @property
    def active(self) -> bool:
        return self.a > ZERO_AMPLITUDE

    def h(self, z):
        """Scalar damping coefficient ``a (exp(b z^r) - 1)``."""
        return self.a * np.expm1(self.b * np.asarray(z, dtype=float) ** self.r)


@dataclass(frozen=True)
class ClipPolicy:
    """Speed cap applied before exponentiation.

    ``v_max=None`` picks the largest speed with ``b * v_max^r <= 700``.
    """

    v_max: float | None = None
    mode: str = "saturate"

    def __post_init__(self):
        if self.mode not in ("error", "saturate"):
            raise ValueError(f"clip mode must be 'error' or 'saturate', got {self.mode!r}")
        if self.v_max is not None and not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    def resolve(self, p: DampingParams) -> float:
        limit = (EXP_CEILING / p.b) ** (1.0 / p.r)
        if self.v_max is None:
            return limit
        if self.v_max > limit * (1 + 1e-12):
            raise ValueError(
                f"v_max={self.v_max} gives b*v_max^r > {EXP_CEILING}; largest safe value is {limit:.6g}"
            )
        return self.v_max


DEFAULT_CLIP = ClipPolicy()


def _damping_vectors(values: np.ndarray, p: DampingParams, clip: ClipPolicy, speed2=None):
    """Pointwise damping on an array of vectors stacked along axis 0.

    Returns ``(force, coefficient_times_speed_ratio, saturated_count)`` where
    the middle array ``c`` satisfies ``force = a * c * v``.
    """
    v_max = clip.resolve(p)
    if speed2 is None:
        speed2 = np.sum(values**2, axis=0)
    speed = np.sqrt(speed2)
    over = speed > v_max
    n_over = int(np.count_nonzero(over))
    if n_over:
        if clip.mode == "error":
            idx = np.unravel_index(int(np.argmax(speed)), speed.shape)
            raise OverflowRisk(
                f"speed {speed[idx]:.6g} exceeds v_max={v_max:.6g} at grid point {tuple(int(i) for i in idx)}",
                index=idx,
                speed=float(speed[idx]),
            )
        capped = np.minimum(speed, v_max)
        # evaluate at the capped vector v_max * v/|v|
        ratio = np.ones_like(speed)
        ratio[over] = v_max / speed[over]
        coeff = np.expm1(p.b * capped**p.r) * ratio
    else:
        coeff = np.expm1(p.b * speed2 ** (0.5 * p.r))
    return p.a * coeff * values, coeff, n_over


def damping_pointwise(v, p: DampingParams, clip: ClipPolicy = DEFAULT_CLIP) -> np.ndarray:
    """``a (exp(b|v|^r) - 1) v`` for a single 3-vector."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("damping_pointwise needs a finite vector")
    force, _, _ = _damping_vectors(v.reshape(-1, 1), p, clip)
    return force.reshape(v.shape)


@dataclass
class BandTerms:
    """Nonlinear terms on the compact band (see ``spectral.Band``)."""

    transport: np.ndarray  # A_n div(u (x) u)
    damping: np.ndarray  # A_n[a (exp(b|u|^r) - 1) u]
    dissipation: float  # grid quadrature of (exp(b|u|^r) - 1)|u|^2
    saturated: int
    max_speed: float


_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
# _SLOT[i][j] is the row of u_i u_j among the six distinct products
_SLOT = ((0, 1, 2), (1, 3, 4), (2, 4, 5))


def band_terms(c: np.ndarray, grid: Grid, p: DampingParams,
               clip: ClipPolicy = DEFAULT_CLIP) -> BandTerms:
    """Evaluate transport and damping for band coefficients ``c`` of shape (3, M).

    One inverse transform brings ``u`` to the grid; the six products
    ``u_i u_j`` and (when damping is active) the three damping components go
    back through a single batched forward transform.
    """
    band = grid.band
    u = band.to_physical(c)
    n_fields = 9 if p.active else 6
    stack = np.empty((n_fields,) + grid.shape)
    for m, (i, j) in enumerate(_PAIRS):
        np.multiply(u[i], u[j], out=stack[m])
    speed2 = stack[0] + stack[3] + stack[5]
    dissipation, n_over = 0.0, 0
    if p.active:
        stack[6:], coeff, n_over = _damping_vectors(u, p, clip, speed2)
        dissipation = grid.cell_volume * float(np.sum(coeff * speed2))
    spec = band.from_physical(stack)
    k = band.k
    transport = np.empty((3, band.size), dtype=complex)
    for i in range(3):
        s = _SLOT[i]
        transport[i] = 1j * (k[0] * spec[s[0]] + k[1] * spec[s[1]] + k[2] * spec[s[2]])
    transport = band.project(transport)
    damping = band.project(spec[6:]) if p.active else np.zeros_like(transport)
    return BandTerms(transport, damping, dissipation, n_over, float(np.sqrt(np.max(speed2))))


def _check_band_limited(u: SpectralVectorField, tol: float = 1e-24) -> None:
    total = float(np.sum(np.abs(u.coeffs) ** 2))
    outside = u.outside_ball_energy()
    if outside > tol * max(1.0, total):
        raise ValueError(f"field has energy {outside:.3e} outside the truncation ball")


def damping_term(u: SpectralVectorField, p: DampingParams,
                 clip: ClipPolicy = DEFAULT_CLIP) -> SpectralVectorField:
    """``A_n[a (exp(b|u|^r) - 1) u]`` by collocation; ``u`` must be band-limited."""
    grid = u.grid
    _check_band_limited(u)
    if not p.active:
        return SpectralVectorField.zeros(grid)
    terms = band_terms(grid.band.gather(u.coeffs), grid, p, clip)
    return SpectralVectorField(grid.band.to_full(terms.damping), grid, True)


def damping_dissipation(u: SpectralVectorField, p: DampingParams,
                        clip: ClipPolicy = DEFAULT_CLIP) -> float:
    """Quadrature of ``(exp(b|u|^r) - 1) |u|^2``; consistent with the clip policy."""
    grid = u.grid
    values = _to_physical(u.coeffs, grid)
    _, coeff, _ = _damping_vectors(values, DampingParams(1.0, p.b, p.r), clip)
    return grid.cell_volume * float(np.sum(coeff * np.sum(values**2, axis=0)))


def transport_term(u: SpectralVectorField) -> SpectralVectorField:
    """``A_n[div(u (x) u)]`` evaluated pseudo-spectrally.

    Raises ``ValueError`` if ``u`` carries energy outside the truncation ball,
    since the products would then alias.
    """
    grid = u.grid
    _check_band_limited(u)
    terms = band_terms(grid.band.gather(u.coeffs), grid, DampingParams(0.0))
    return SpectralVectorField(grid.band.to_full(terms.transport), grid, True)


def lemma2_power_gap(x, y, beta: float) -> np.ndarray:
    """``<|x|^b x - |y|^b y, x - y> - (|x|^b + |y|^b)|x - y|^2 / 2``.

    ``x`` and ``y`` are arrays whose last axis is the vector dimension.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.linalg.norm(x, axis=-1) ** beta
    v = np.linalg.norm(y, axis=-1) ** beta
    return _gap(x, y, u, v)


def lemma2_gap(x, y, p: DampingParams) -> np.ndarray:
    """Same gap with the weights ``exp(b|.|^r) - 1``; ``a`` plays no role."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.expm1(p.b * np.linalg.norm(x, axis=-1) ** p.r)
    v = np.expm1(p.b * np.linalg.norm(y, axis=-1) ** p.r)
    return _gap(x, y, u, v)


def _gap(x, y, u, v):
    d = x - y
    lhs = np.sum((u[..., None] * x - v[..., None] * y) * d, axis=-1)
    return lhs - 0.5 * (u + v) * np.sum(d * d, axis=-1)


def lemma2_scale(x, y, r: float) -> np.ndarray:
    """Tolerance scale ``(1 + |x| + |y|)^(r+2)``."""
    return (1.0 + np.linalg.norm(x, axis=-1) + np.linalg.norm(y, axis=-1)) ** (r + 2)

"""Wavenumber lattice, transforms, projection operators and norms.

Fields live on the periodic box ``[0, 2*pi*L]^3`` sampled at ``n`` points per
axis.  Fourier coefficients use the "forward" normalisation::

    u_hat(k) = n**-3 * sum_x u(x) exp(-i k.x)
    u(x)     = sum_k u_hat(k) exp(i k.x)

so that a single ``cos(x)`` carries coefficient 1/2 at ``k = +-1`` and the
discrete Parseval identity reads::

    (2*pi*L/n)**3 * sum_x |u(x)|**2 == (2*pi*L)**3 * sum_k |u_hat(k)|**2

Spectral arrays always hold the full lattice, shape ``(3, n, n, n)``, in FFT
index order along every axis.  Index ``j`` maps to the wavenumber
``fold(j) / L`` with ``fold`` taking values in ``(-n/2, n/2]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridError

__all__ = [
    "Grid",
    "SpectralVectorField",
    "PhysicalVectorField",
    "make_grid",
    "forward_transform",
    "inverse_transform",
    "leray_project",
    "friedrichs_truncate",
    "a_n_operator",
    "sobolev_norm",
    "homogeneous_sobolev_norm",
    "l2_norm",
    "lp_norm",
    "inner",
    "gradient_norm",
    "divergence",
    "low_pass",
]

# Relative slack on radius comparisons, so that |k| == R lands inside the ball.
_BALL_EPS = 1e-12


def _fold(n: int) -> np.ndarray:
    j = np.arange(n)
    return np.where(j <= n // 2, j, j - n)


@dataclass(frozen=True)
class Grid:
    n_points: int
    box_scale: float
    trunc_radius: float

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_points,) * 3

    @property
    def length(self) -> float:
        """Side of the periodic box, ``2*pi*L``."""
        return 2.0 * np.pi * self.box_scale

    @property
    def volume(self) -> float:
        return self.length**3

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n_points) ** 3

    @property
    def dealias_limit(self) -> float:
        return (self.n_points / 3.0) / self.box_scale

    @cached_property
    def axis_indices(self) -> np.ndarray:
        return _fold(self.n_points)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return self.axis_indices / self.box_scale

    @cached_property
    def index_vectors(self) -> np.ndarray:
        """Integer lattice vectors, shape ``(3, n, n, n)``."""
        return np.stack(np.meshgrid(*(self.axis_indices,) * 3, indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        return self.index_vectors / self.box_scale

    @cached_property
    def index_norm2(self) -> np.ndarray:
        return np.sum(self.index_vectors**2, axis=0)

    @cached_property
    def k2(self) -> np.ndarray:
        return self.index_norm2 / self.box_scale**2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        nz = self.index_norm2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on every lattice point with some index equal to ``n/2``."""
        half = self.n_points // 2
        return np.any(self.index_vectors == half, axis=0)

    def ball_mask(self, radius: float) -> np.ndarray:
        """Closed ball ``|k| <= radius`` on the lattice."""
        bound = (radius * self.box_scale) ** 2 * (1.0 + _BALL_EPS)
        return self.index_norm2 <= bound

    @cached_property
    def trunc_mask(self) -> np.ndarray:
        return self.ball_mask(self.trunc_radius)

    @cached_property
    def coords(self) -> np.ndarray:
        x = self.length * np.arange(self.n_points) / self.n_points
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    @cached_property
    def negate_index(self) -> np.ndarray:
        """Index permutation sending ``j`` to the index of ``-fold(j)``."""
        return (-np.arange(self.n_points)) % self.n_points

    @cached_property
    def band(self) -> "Band":
        return Band(self)

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "box_scale": self.box_scale,
            "trunc_radius": self.trunc_radius,
        }


def make_grid(n_points: int, box_scale: float = 1.0, trunc_radius: float | None = None) -> Grid:
    """Build a grid; ``trunc_radius`` defaults to the dealiasing limit ``(n/3)/L``."""
    if int(n_points) != n_points:
        raise GridError(f"n_points must be an integer, got {n_points!r}")
    n_points = int(n_points)
    if n_points < 8 or n_points % 2:
        raise GridError(f"n_points must be even and >= 8, got {n_points}")
    if n_points & (n_points - 1):
        raise GridError(f"n_points must be a power of two, got {n_points}")
    if not box_scale > 0:
        raise GridError(f"box_scale must be positive, got {box_scale}")
    limit = (n_points / 3.0) / box_scale
    if trunc_radius is None:
        trunc_radius = limit
    if not trunc_radius > 0:
        raise GridError(f"trunc_radius must be positive, got {trunc_radius}")
    if trunc_radius > limit * (1.0 + _BALL_EPS):
        raise GridError(
            f"trunc_radius {trunc_radius} exceeds the dealiasing bound (n/3)/L = {limit:.6g}"
        )
    return Grid(n_points, float(box_scale), float(trunc_radius))


def _check_same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    coeffs: np.ndarray
    grid: Grid
    divergence_free: bool = field(default=False)

    def __post_init__(self):
        expected = (3,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise GridError(f"coefficient shape {self.coeffs.shape} != {expected}")

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralVectorField:
        return cls(np.zeros((3,) + grid.shape, dtype=complex), grid, True)

    def _wrap(self, coeffs, divergence_free=False):
        return SpectralVectorField(coeffs, self.grid, divergence_free)

    def __add__(self, other):
        _check_same_grid(self, other)
        return self._wrap(self.coeffs + other.coeffs, self.divergence_free and other.divergence_free)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return self._wrap(self.coeffs - other.coeffs, self.divergence_free and other.divergence_free)

    def __mul__(self, scalar):
        return self._wrap(self.coeffs * scalar, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.coeffs, self.divergence_free)

    def hermitian_defect(self) -> float:
        neg = self.grid.negate_index
        mirrored = self.coeffs[:, neg][:, :, neg][:, :, :, neg]
        return float(np.max(np.abs(self.coeffs - np.conj(mirrored)), initial=0.0))

    def divergence_defect(self) -> float:
        """max over k of ``|k.u(k)| / max(1, |u(k)|)``."""
        kdot = np.abs(np.sum(self.grid.k * self.coeffs, axis=0))
        scale = np.maximum(1.0, np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0)))
        return float(np.max(kdot / scale))

    def outside_ball_energy(self, radius: float | None = None) -> float:
        radius = self.grid.trunc_radius if radius is None else radius
        mask = ~self.grid.ball_mask(radius)
        return float(np.sum(np.abs(self.coeffs[:, mask]) ** 2))

    def check_invariants(self, tol: float = 1e-12) -> list[str]:
        """Return a list of violated invariants (empty when all hold)."""
        problems = []
        if not np.all(np.isfinite(self.coeffs)):
            problems.append("non-finite coefficients")
        if self.hermitian_defect() > tol * max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0))):
            problems.append("Hermitian symmetry broken")
        if np.any(self.coeffs[:, 0, 0, 0] != 0):
            problems.append("nonzero mean mode")
        if self.divergence_free and self.divergence_defect() > tol:
            problems.append("divergence above tolerance")
        return problems


@dataclass(frozen=True, eq=False)
class PhysicalVectorField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        expected = (3,) + self.grid.shape
        if self.values.shape != expected:
            raise GridError(f"value shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("physical field contains NaN or Inf")

    def speed(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))


# -- transforms -------------------------------------------------------------

def _hermitian_expand(half: np.ndarray, grid: Grid) -> np.ndarray:
    """Rebuild the full lattice from an ``rfftn`` half spectrum."""
    n = grid.n_points
    h = n // 2 + 1
    full = np.empty(half.shape[:-1] + (n,), dtype=complex)
    full[..., :h] = half
    neg = grid.negate_index
    mirrored = np.take(np.take(half, neg, axis=-3), neg, axis=-2)
    full[..., h:] = np.conj(mirrored[..., n - np.arange(h, n)])
    return full


def _to_spectral(values: np.ndarray, grid: Grid) -> np.ndarray:
    half = sfft.rfftn(values, axes=(-3, -2, -1), norm="forward")
    return _hermitian_expand(half, grid)


def _to_physical(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    n = grid.n_points
    return sfft.irfftn(coeffs[..., : n // 2 + 1], s=grid.shape, axes=(-3, -2, -1), norm="forward")


def forward_transform(f: PhysicalVectorField) -> SpectralVectorField:
    return SpectralVectorField(_to_spectral(f.values, f.grid), f.grid)


def inverse_transform(g: SpectralVectorField) -> PhysicalVectorField:
    return PhysicalVectorField(_to_physical(g.coeffs, g.grid), g.grid)


# -- operators --------------------------------------------------------------

class Band:
    """Compact storage of the modes inside the truncation ball.

    Only the ``rfftn`` half lattice (``kz`` index ``0..n/2``) is kept, minus
    the mean mode; Hermitian symmetry supplies the rest.  Arrays have shape
    ``(..., M)``.  ``weight`` is 1 on the ``kz = 0`` plane and 2 elsewhere, so
    ``sum(weight * |c|^2)`` is the full-lattice sum.
    """

    def __init__(self, grid: Grid):
        h = grid.n_points // 2 + 1
        self.grid = grid
        self.half_shape = grid.shape[:2] + (h,)
        mask = grid.trunc_mask[..., :h] & (grid.index_norm2[..., :h] > 0)
        self.flat = np.flatnonzero(mask)
        self.k = grid.k[..., :h].reshape(3, -1)[:, self.flat]
        self.k2 = np.sum(self.k**2, axis=0)
        self.inv_k2 = 1.0 / self.k2
        kz_index = grid.index_vectors[2][..., :h].reshape(-1)[self.flat]
        self.weight = np.where(kz_index == 0, 1.0, 2.0)

    @property
    def size(self) -> int:
        return self.flat.size

    def gather(self, coeffs: np.ndarray) -> np.ndarray:
        h = self.half_shape[2]
        lead = coeffs.shape[:-3]
        return coeffs[..., :h].reshape(lead + (-1,))[..., self.flat]

    def to_half(self, c: np.ndarray) -> np.ndarray:
        lead = c.shape[:-1]
        half = np.zeros(lead + (int(np.prod(self.half_shape)),), dtype=complex)
        half[..., self.flat] = c
        return half.reshape(lead + self.half_shape)

    def to_full(self, c: np.ndarray) -> np.ndarray:
        return _hermitian_expand(self.to_half(c), self.grid)

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        return sfft.irfftn(self.to_half(c), s=self.grid.shape, axes=(-3, -2, -1), norm="forward")

    def from_physical(self, values: np.ndarray) -> np.ndarray:
        half = sfft.rfftn(values, axes=(-3, -2, -1), norm="forward")
        lead = half.shape[:-3]
        return half.reshape(lead + (-1,))[..., self.flat]

    def project(self, c: np.ndarray) -> np.ndarray:
        k = self.k
        kdotu = k[0] * c[0] + k[1] * c[1] + k[2] * c[2]
        return c - k * (kdotu * self.inv_k2)

    def energy(self, c: np.ndarray) -> float:
        """``||u||_{L^2}^2``."""
        return self.grid.volume * float(np.sum(self.weight * (c.real**2 + c.imag**2)))

    def gradient_energy(self, c: np.ndarray) -> float:
        """``||grad u||_{L^2}^2``."""
        return self.grid.volume * float(np.sum(self.weight * self.k2 * (c.real**2 + c.imag**2)))


def _project(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    k = grid.k
    kdotu = k[0] * coeffs[0] + k[1] * coeffs[1] + k[2] * coeffs[2]
    out = coeffs - k * (kdotu * grid.inv_k2)
    # the mean mode has no direction and Nyquist modes have no sign
    out[:, 0, 0, 0] = 0.0
    out[:, grid.nyquist_mask] = 0.0
    return out


def leray_project(g: SpectralVectorField) -> SpectralVectorField:
    """Apply ``I - k k^T / |k|^2`` mode by mode."""
    return SpectralVectorField(_project(g.coeffs, g.grid), g.grid, True)


def friedrichs_truncate(g: SpectralVectorField, radius: float | None = None) -> SpectralVectorField:
    """Zero every coefficient with ``|k| > radius`` (closed ball kept)."""
    if radius is None:
        mask = g.grid.trunc_mask
    else:
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        mask = g.grid.ball_mask(radius)
    return SpectralVectorField(g.coeffs * mask, g.grid, g.divergence_free)


def a_n_operator(g: SpectralVectorField) -> SpectralVectorField:
    """Truncate to the grid's Friedrichs ball, then Leray-project."""
    return leray_project(friedrichs_truncate(g))


def divergence(g: SpectralVectorField) -> np.ndarray:
    """Coefficients of ``div u``, shape ``(n, n, n)``."""
    return 1j * np.sum(g.grid.k * g.coeffs, axis=0)


def low_pass(g: SpectralVectorField, kappa: float) -> SpectralVectorField:
    """Keep modes with ``|k| < kappa`` strictly."""
    grid = g.grid
    bound = (kappa * grid.box_scale) ** 2 * (1.0 - _BALL_EPS)
    mask = grid.index_norm2 < bound
    return SpectralVectorField(g.coeffs * mask, grid, g.divergence_free)


# -- norms ------------------------------------------------------------------

def _weighted_sum(g: SpectralVectorField, weight) -> float:
    power = np.sum(np.abs(g.coeffs) ** 2, axis=0)
    return float(g.grid.volume * np.sum(weight * power))


def l2_norm(g: SpectralVectorField) -> float:
    return np.sqrt(_weighted_sum(g, 1.0))


def sobolev_norm(g: SpectralVectorField, s: float) -> float:
    """Inhomogeneous norm with weight ``(1 + |k|^2)^s``."""
    return np.sqrt(_weighted_sum(g, (1.0 + g.grid.k2) ** s))


def homogeneous_sobolev_norm(g: SpectralVectorField, s: float) -> float:
    """Homogeneous norm with weight ``|k|^(2s)``.

    For ``s < 0`` the mean mode must vanish; for ``s > 0`` it carries no weight.
    """
    grid = g.grid
    mean = g.coeffs[:, 0, 0, 0]
    if s == 0:
        return l2_norm(g)
    if s < 0 and np.any(mean != 0):
        raise ValueError("negative-order homogeneous norm needs a zero mean mode")
    weight = np.zeros(grid.shape)
    nz = grid.index_norm2 > 0
    weight[nz] = grid.k2[nz] ** s
    return np.sqrt(_weighted_sum(g, weight))


def gradient_norm(g: SpectralVectorField) -> float:
    """``||grad u||_{L^2}``."""
    return np.sqrt(_weighted_sum(g, g.grid.k2))


def inner(g: SpectralVectorField, h: SpectralVectorField) -> float:
    """Real L^2 pairing ``<g, h>`` computed from coefficients."""
    _check_same_grid(g, h)
    return float(g.grid.volume * np.real(np.sum(np.conj(g.coeffs) * h.coeffs)))


def lp_norm(f: PhysicalVectorField, p: float) -> float:
    """Grid quadrature of ``(int |f|^p dx)^(1/p)``; ``p = inf`` gives the max."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    speed = f.speed()
    if np.isinf(p):
        return float(np.max(speed))
    return float((f.grid.cell_volume * np.sum(speed**p)) ** (1.0 / p))

"""Pseudo-spectral solver for the 3D Navier-Stokes equations with exponential damping.

    u_t - nu Lap u + (u . grad) u + a (exp(b|u|^r) - 1) u + grad p = 0,  div u = 0

on the periodic box ``[0, 2 pi L]^3``, truncated to a Fourier ball and
projected onto divergence-free fields, together with reference oracles and
diagnostics for the energy, stability and decay estimates.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config, parse_config
from .diagnostics import (
    DecayReport,
    EnergyCheck,
    StabilityReport,
    decay_probe,
    half_life,
    k1k2_split,
    lemma2_property_check,
    stability_experiment,
    verify_energy,
)
from .errors import (
    ConfigError,
    EmptyLedger,
    GridError,
    InvariantViolation,
    ModeCountError,
    NonFiniteState,
    OverflowRisk,
)
from .integrator import RunResult, SimParams, SolverState, init_random_divfree, init_taylor_green, run, step
from .ledger import EnergyLedger, LedgerRow
from .nonlinearity import (
    ClipPolicy,
    DampingParams,
    damping_dissipation,
    damping_pointwise,
    damping_term,
    lemma2_gap,
    lemma2_power_gap,
    transport_term,
)
from .snapshot import read_snapshot, write_snapshot
from .spectral import (
    Grid,
    PhysicalVectorField,
    SpectralVectorField,
    a_n_operator,
    forward_transform,
    friedrichs_truncate,
    homogeneous_sobolev_norm,
    inverse_transform,
    l2_norm,
    leray_project,
    lp_norm,
    make_grid,
    sobolev_norm,
)

"""Spectral snapshot files.

Layout (all offsets in bytes)::

    <JSON header, UTF-8, one line>\\n
    <raw coefficients>

The header is a single JSON object with at least::

    {"format": "dampns-snapshot", "version": 1,
     "grid": {"n_points": n, "box_scale": L, "trunc_radius": R},
     "time": t, "field": "velocity",
     "dtype": "complex128" | "complex64", "endianness": "little",
     "layout": "component-major, lattice row-major (C order), FFT index order",
     "shape": [3, n, n, n]}

plus any extra keys (e.g. ``"config"``).  The payload is ``3*n^3``
little-endian complex numbers (real part first), component index slowest,
then the three lattice indices in C order.  Lattice index ``j`` along an axis
is wavenumber ``fold(j)/L`` with ``fold(j) = j`` for ``j <= n/2`` and
``j - n`` otherwise.  Coefficients use the forward normalisation
``u_hat(k) = n^-3 sum_x u(x) exp(-i k.x)``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .spectral import Grid, SpectralVectorField, make_grid

FORMAT_NAME = "dampns-snapshot"
LAYOUT = "component-major, lattice row-major (C order), FFT index order"
_DTYPES = {"complex128": "<c16", "complex64": "<c8"}


def write_snapshot(path, g: SpectralVectorField, time: float, name: str = "velocity",
                   dtype: str = "complex128", extra: dict | None = None) -> Path:
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    header = {
        "format": FORMAT_NAME,
        "version": 1,
        "grid": g.grid.to_dict(),
        "time": float(time),
        "field": name,
        "dtype": dtype,
        "endianness": "little",
        "layout": LAYOUT,
        "shape": [3, *g.grid.shape],
    }
    if extra:
        header.update(extra)
    path = Path(path)
    payload = np.ascontiguousarray(g.coeffs, dtype=_DTYPES[dtype]).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)
    return path


def read_snapshot(path) -> tuple[SpectralVectorField, dict]:
    """Return ``(field, header)``."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    header = json.loads(line.decode("utf-8"))
    if header.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("endianness") != "little":
        raise ValueError(f"{path}: unsupported endianness {header.get('endianness')!r}")
    dtype = _DTYPES.get(header.get("dtype"))
    if dtype is None:
        raise ValueError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    gd = header["grid"]
    grid: Grid = make_grid(gd["n_points"], gd["box_scale"], gd["trunc_radius"])
    shape = (3,) + grid.shape
    data = np.frombuffer(payload, dtype=dtype)
    if data.size != np.prod(shape):
        raise ValueError(f"{path}: payload holds {data.size} values, expected {np.prod(shape)}")
    coeffs = data.reshape(shape).astype(complex)
    return SpectralVectorField(coeffs, grid), header

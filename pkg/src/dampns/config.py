"""Flat key-value run configuration.

Grammar, one item per line::

    # comment            (also after a value: key = 1  # note)
    [section]
    key = value

Sections and keys are fixed (see ``SCHEMA``); anything else is an error
naming the line.  Numbers accept fractions such as ``7/3``; lists are
comma-separated.  Every default is filled in and echoed by ``to_dict``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, GridError
from .integrator import SimParams, init_random_divfree, init_taylor_green
from .nonlinearity import ClipPolicy, DampingParams
from .spectral import Grid, SpectralVectorField, make_grid


def _number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _integer(text: str) -> int:
    value = _number(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _optional_number(text: str):
    return None if text.strip().lower() in ("auto", "none", "") else _number(text)


def _number_list(text: str) -> list[float]:
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    return [_number(t) for t in items]


def _string(text: str) -> str:
    return text.strip()


# section -> key -> (parser, default); default None means "derived"
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {
        "n_points": (_integer, 32),
        "box_scale": (_number, 1.0),
        "trunc_radius": (_optional_number, None),
    },
    "sim": {
        "nu": (_number, 1.0),
        "dt": (_number, 1e-3),
        "t_end": (_number, 1.0),
        "output_every": (_integer, 10),
        "scheme_order": (_integer, 2),
        "energy_tol": (_number, 1e-4),
    },
    "damping": {
        "a": (_number, 1.0),
        "b": (_number, 1.0),
        "r": (_number, 4.0),
        "v_max": (_optional_number, None),
        "clip_mode": (_string, "saturate"),
    },
    "initial": {
        "kind": (_string, "taylor_green"),
        "amplitude": (_number, 1.0),
        "seed": (_integer, 0),
        "cutoff": (_optional_number, None),
        "path": (_string, ""),
    },
    "outputs": {
        "directory": (_string, "out"),
        "snapshot_every": (_integer, 0),
        "snapshot_dtype": (_string, "complex128"),
    },
    "stability": {
        "delta_kind": (_string, "random"),
        "delta_rel": (_number, 1e-3),
        "delta_seed": (_integer, 1),
        "margin_tol": (_number, 1e-8),
    },
    "decay": {
        "kappa": (_number, 1.0),
    },
    "sweep": {
        "r_values": (_number_list, [1.0, 2.0, 7.0 / 3.0, 3.0, 4.0]),
        "trunc_radii": (_number_list, []),
    },
    "oracle": {
        "seeds": (_integer, 10),
        "amplitude": (_number, 0.1),
        "oversample": (_integer, 4),
        "t_end": (_number, 0.1),
    },
}

INITIAL_KINDS = ("taylor_green", "random", "snapshot")


@dataclass
class RunConfig:
    values: dict[str, dict] = field(default_factory=dict)
    lines: dict[tuple[str, str], int | str] = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def to_dict(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}

    def _where(self, section, key):
        return self.lines.get((section, key))

    def _fail(self, section, key, message):
        raise ConfigError(f"[{section}] {key}: {message}", line=self._where(section, key), key=f"{section}.{key}")

    # -- builders ----------------------------------------------------------

    def grid(self) -> Grid:
        g = self["grid"]
        try:
            return make_grid(g["n_points"], g["box_scale"], g["trunc_radius"])
        except GridError as exc:
            key = "trunc_radius" if "trunc_radius" in str(exc) else (
                "box_scale" if "box_scale" in str(exc) else "n_points")
            self._fail("grid", key, str(exc))

    def damping(self) -> DampingParams:
        d = self["damping"]
        try:
            return DampingParams(d["a"], d["b"], d["r"])
        except ValueError as exc:
            key = next((k for k in ("a", "b", "r") if f" {k} " in str(exc)), "a")
            self._fail("damping", key, str(exc))

    def clip(self) -> ClipPolicy:
        d = self["damping"]
        try:
            clip = ClipPolicy(d["v_max"], d["clip_mode"])
        except ValueError as exc:
            self._fail("damping", "clip_mode" if "mode" in str(exc) else "v_max", str(exc))
        try:
            clip.resolve(self.damping())
        except ValueError as exc:
            self._fail("damping", "v_max", str(exc))
        return clip

    def sim_params(self, **overrides) -> SimParams:
        s = self["sim"]
        kwargs = dict(
            nu=s["nu"], damping=self.damping(), dt=s["dt"], t_end=s["t_end"],
            output_every=s["output_every"], scheme_order=s["scheme_order"], clip=self.clip(),
        )
        kwargs.update(overrides)
        try:
            return SimParams(**kwargs)
        except ValueError as exc:
            msg = str(exc)
            key = next((k for k in ("nu", "dt", "t_end", "output_every", "scheme_order") if msg.startswith(k)), "dt")
            self._fail("sim", key, msg)

    def initial_field(self, grid: Grid | None = None) -> SpectralVectorField:
        from .snapshot import read_snapshot

        grid = grid or self.grid()
        ic = self["initial"]
        kind = ic["kind"]
        if kind == "taylor_green":
            try:
                return init_taylor_green(grid, ic["amplitude"])
            except ValueError as exc:
                self._fail("initial", "kind", str(exc))
        if kind == "random":
            cutoff = grid.trunc_radius if ic["cutoff"] is None else ic["cutoff"]
            try:
                return init_random_divfree(grid, ic["seed"], cutoff, ic["amplitude"])
            except ValueError as exc:
                self._fail("initial", "cutoff", str(exc))
        u, _ = read_snapshot(ic["path"])
        if u.grid != grid:
            self._fail("initial", "path", f"snapshot grid {u.grid} differs from configured grid {grid}")
        return u

    def validate(self) -> RunConfig:
        grid = self.grid()
        self.sim_params()
        ic = self["initial"]
        if ic["kind"] not in INITIAL_KINDS:
            self._fail("initial", "kind", f"must be one of {', '.join(INITIAL_KINDS)}")
        if ic["kind"] == "random" and ic["cutoff"] is not None and ic["cutoff"] > grid.trunc_radius * (1 + 1e-12):
            self._fail("initial", "cutoff", f"cutoff {ic['cutoff']} exceeds trunc_radius {grid.trunc_radius:.6g}")
        if ic["kind"] == "snapshot" and not Path(ic["path"]).is_file():
            self._fail("initial", "path", f"snapshot file {ic['path']!r} not found")
        if ic["kind"] != "snapshot" and ic["amplitude"] < 0:
            self._fail("initial", "amplitude", "must be >= 0")
        if self["outputs"]["snapshot_every"] < 0:
            self._fail("outputs", "snapshot_every", "must be >= 0")
        if self["outputs"]["snapshot_dtype"] not in ("complex128", "complex64"):
            self._fail("outputs", "snapshot_dtype", "must be complex128 or complex64")
        if self["stability"]["delta_kind"] not in ("random", "scale"):
            self._fail("stability", "delta_kind", "must be 'random' or 'scale'")
        if not self["decay"]["kappa"] > 0:
            self._fail("decay", "kappa", "must be positive")
        for r in self["sweep"]["r_values"]:
            if not r >= 1:
                self._fail("sweep", "r_values", f"exponent {r} is below 1")
        for radius in self["sweep"]["trunc_radii"]:
            if not 0 < radius <= grid.dealias_limit * (1 + 1e-12):
                self._fail("sweep", "trunc_radii", f"radius {radius} outside (0, (n/3)/L = {grid.dealias_limit:.6g}]")
        if self["oracle"]["oversample"] not in (2, 4, 8):
            self._fail("oracle", "oversample", "must be 2, 4 or 8")
        if self["oracle"]["seeds"] < 1:
            self._fail("oracle", "seeds", "must be >= 1")
        return self


def _assign(cfg: RunConfig, section: str, key: str, raw: str, where) -> None:
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", line=where if isinstance(where, int) else None)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]", line=where if isinstance(where, int) else None,
                          key=f"{section}.{key}")
    parser = SCHEMA[section][key][0]
    try:
        cfg.values[section][key] = parser(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw.strip()!r} ({exc})",
                          line=where if isinstance(where, int) else None, key=f"{section}.{key}") from None
    cfg.lines[(section, key)] = where


def _defaults() -> RunConfig:
    cfg = RunConfig()
    for section, keys in SCHEMA.items():
        cfg.values[section] = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in keys.items()}
    return cfg


def parse_config(text: str, overrides: list[str] | None = None, validate: bool = True) -> RunConfig:
    """Parse config text, apply ``section.key=value`` overrides, and validate."""
    cfg = _defaults()
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", line=lineno, key=f"{section}.{key}")
        seen.add((section, key))
        _assign(cfg, section, key, value, lineno)
    for item in overrides or []:
        apply_override(cfg, item)
    g = cfg.values["grid"]
    if g["trunc_radius"] is None and g["box_scale"] > 0 and g["n_points"] > 0:
        g["trunc_radius"] = (g["n_points"] / 3.0) / g["box_scale"]
    return cfg.validate() if validate else cfg


def apply_override(cfg: RunConfig, item: str) -> None:
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    dotted, value = item.split("=", 1)
    section, key = dotted.strip().split(".", 1)
    _assign(cfg, section, key, value, f"override {dotted.strip()}")


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    cfg = parse_config(text, overrides)
    cfg.source = str(path)
    return cfg


def format_config(cfg: RunConfig) -> str:
    """Render a config (with every default filled in) back to text."""
    out = []
    for section, keys in cfg.to_dict().items():
        out.append(f"[{section}]")
        for k, v in keys.items():
            if isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            elif v is None:
                v = "auto"
            elif isinstance(v, float) and math.isfinite(v):
                v = repr(v)
            out.append(f"{k} = {v}")
        out.append("")
    return "\n".join(out)

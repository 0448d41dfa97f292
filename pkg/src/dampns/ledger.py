"""Energy ledger: the time series behind the energy inequality check."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

LEDGER_COLUMNS = ("t", "energy", "visc_cum", "damp_cum", "residual", "saturation_count")


@dataclass(frozen=True)
class LedgerRow:
    t: float
    energy: float
    visc_cum: float
    damp_cum: float
    residual: float
    saturation_count: int = 0


@dataclass
class EnergyLedger:
    """Rows of ``(t, E, 2nu int |grad u|^2, 2a int D, residual, saturations)``.

    ``E`` is ``||u||_{L^2}^2`` and ``residual = E(0) - E(t) - visc_cum - damp_cum``.
    """

    rows: list[LedgerRow] = field(default_factory=list)

    def append(self, row: LedgerRow) -> None:
        if self.rows and not row.t > self.rows[-1].t:
            raise ValueError(f"ledger times must increase: {row.t} after {self.rows[-1].t}")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    @property
    def initial_energy(self) -> float:
        return self.rows[0].energy if self.rows else 0.0

    def max_abs_residual(self) -> float:
        return max((abs(r.residual) for r in self.rows), default=0.0)

    def to_csv(self, path=None, meta: dict | None = None) -> str:
        """Serialise; ``meta`` is embedded as a leading ``# config: {...}`` line."""
        buf = io.StringIO()
        if meta is not None:
            buf.write("# config: " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LEDGER_COLUMNS)
        for r in self.rows:
            writer.writerow([repr(float(v)) for v in astuple(r)[:5]] + [r.saturation_count])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> EnergyLedger:
        """Read a ledger from a path or from CSV text; ``#`` lines are skipped."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        else:
            text = source
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.reader(lines)
        header = tuple(next(reader, ()))
        if header != LEDGER_COLUMNS:
            raise ValueError(f"unexpected ledger header {header}")
        names = [f.name for f in fields(LedgerRow)]
        ledger = cls()
        for lineno, values in enumerate(reader, start=2):
            if len(values) != len(names):
                raise ValueError(f"ledger row {lineno}: expected {len(names)} columns")
            nums = [float(v) for v in values[:5]] + [int(float(values[5]))]
            ledger.append(LedgerRow(*nums))
        return ledger

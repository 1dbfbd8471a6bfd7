"""Published ion-pairing coefficients of Ho-doped fibers (shipped fixture)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Tuple

from .config import data_path


@dataclass(frozen=True)
class ReferenceRow:
    fiber_id: str
    reference: str
    coefficient: str
    uncertainty: Optional[str] = None

    @property
    def value(self):
        """Coefficient as a fraction."""
        return float(self.coefficient.rstrip("%")) / 100.0

    def formatted(self):
        if self.uncertainty:
            return f"{self.coefficient.rstrip('%')} ± {self.uncertainty}"
        return self.coefficient


@dataclass(frozen=True)
class ReferenceTable:
    rows: Tuple[ReferenceRow, ...]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def render(self):
        head = ("Fiber ID", "Reference", "Ion Pairing Coefficient")
        body = [(r.fiber_id, r.reference, r.formatted()) for r in self.rows]
        widths = [max(len(row[i]) for row in [head] + body) for i in range(3)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                 for row in [head] + body]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def load_reference_table(path=None):
    text = (data_path("reference_table.csv") if path is None else path).read_text()
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(rows)))
    return ReferenceTable(tuple(
        ReferenceRow(r["fiber_id"], r["reference"], r["ion_pairing_coefficient"],
                     r["uncertainty"] or None)
        for r in reader
    ))

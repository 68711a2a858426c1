"""Typed report tables with deterministic text and JSON rendering."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import List, Sequence, Tuple

# column kind -> number of decimals
PRECISION = {"money": 2, "price": 2, "power": 1, "flow": 3, "pressure": 4, "ratio": 4, "int": 0}


def round_half_even(value, places):
    """Decimal rounding of the float's shortest repr, so 0.125 -> 0.12 and 0.135 -> 0.14."""
    q = Decimal(1).scaleb(-places)
    return Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_EVEN)


def format_cell(value, kind):
    if value is None:
        return "-"
    if kind == "text":
        return str(value)
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    d = round_half_even(value, PRECISION[kind])
    if d == 0:
        d = abs(d)  # no "-0.00"
    return f"{d:.{PRECISION[kind]}f}"


@dataclass
class ReportTable:
    caption: str
    columns: Sequence[Tuple[str, str]]  # (name, kind)
    rows: List[Sequence] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add(self, *cells):
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        self.rows.append(tuple(cells))

    def formatted(self):
        return [[format_cell(v, kind) for v, (_, kind) in zip(row, self.columns)] for row in self.rows]

    def to_text(self):
        header = [name for name, _ in self.columns]
        body = self.formatted()
        widths = [max(len(r[k]) for r in [header] + body) for k in range(len(header))]
        out = [self.caption]
        for r in [header] + body:
            cells = []
            for k, cell in enumerate(r):
                kind = self.columns[k][1]
                cells.append(cell.ljust(widths[k]) if kind == "text" else cell.rjust(widths[k]))
            out.append("  ".join(cells).rstrip())
        out += [f"note: {n}" for n in self.notes]
        return "\n".join(out)

    def to_dict(self):
        # cells are emitted as the same rounded strings the text view shows
        return {
            "caption": self.caption,
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "rows": self.formatted(),
            "notes": list(self.notes),
        }


def render(tables, provenance, fmt="text"):
    if fmt == "json":
        doc = {"provenance": provenance, "tables": [t.to_dict() for t in tables]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    head = [f"# {k}: {provenance[k]}" for k in sorted(provenance)]
    return "\n".join(head) + "\n\n" + "\n\n".join(t.to_text() for t in tables) + "\n"

"""Column-oriented result tables with byte-stable CSV and JSON rendering.

CSV cells use fixed decimal formatting (5 places for numeric cells, matching
the precision the validation tables are quoted at); the structured JSON
document carries full-precision floats plus the metadata needed to interpret
the table without its generating command line.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Any

__all__ = ["ResultTable", "format_float", "json_document"]

SCHEMA_PREFIX = "offloadlab"


def format_float(v: float, places: int = 5) -> str:
    return f"{v:.{places}f}"


@dataclass
class ResultTable:
    """An ordered set of columns and rows plus run metadata."""

    kind: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def add_row(self, *cells: Any) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} cells, got {len(cells)}")
        self.rows.append(list(cells))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.columns) + "\n")
        for row in self.rows:
            rendered = []
            for cell in row:
                if isinstance(cell, bool):
                    rendered.append(str(cell).lower())
                elif isinstance(cell, float):
                    rendered.append(format_float(cell))
                else:
                    rendered.append(str(cell))
            out.write(",".join(rendered) + "\n")
        return out.getvalue()

    def to_json(self) -> str:
        return json_document(
            self.kind,
            {"meta": self.meta, "columns": self.columns, "rows": self.rows},
        )


def json_document(kind: str, payload: dict[str, Any]) -> str:
    doc = {"schema": f"{SCHEMA_PREFIX}/{kind}@1"}
    doc.update(payload)
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"

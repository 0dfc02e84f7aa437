# report.py: plain-text run report rendered with Jinja2

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape

from errors import ArtifactError
from optimizer import CostTrace, average_gate_fidelity
from trotter import TrotterChoice
from utils import format_cost, safe_write_text

TEMPLATES_DIR = Path(__file__).resolve().parent / "templates"
REPORT_TEMPLATE = "report.txt.j2"


@dataclass
class DepthRun:
    """What the report needs from one compiled depth."""

    depth: int
    order: int
    k: int
    padding: int
    init_cost: float
    final_cost: float
    sweeps: int
    chi_train: int
    verify_chi: int
    escalations: List[int] = field(default_factory=list)

    @classmethod
    def from_trace(cls, depth: int, choice: TrotterChoice, trace: CostTrace) -> "DepthRun":
        return cls(
            depth=depth,
            order=choice.order,
            k=choice.k,
            padding=choice.padding,
            init_cost=trace.init_cost,
            final_cost=trace.final_cost,
            sweeps=max((r.sweep for r in trace.records), default=0),
            chi_train=trace.chi_train,
            verify_chi=trace.verify_chi,
            escalations=[s for s, _ in trace.escalations],
        )

    def as_metadata(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_metadata(cls, metadata: Dict[str, Any]) -> "DepthRun":
        try:
            return cls(**{f.name: metadata[f.name] for f in fields(cls)})
        except KeyError as exc:
            raise ArtifactError(f"circuit metadata lacks {exc.args[0]!r}; recompile this depth.") from exc


def _ratio(value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{float(value):.4g}"


def _fidelity(cost: Optional[float], n: int) -> str:
    if cost is None:
        return "-"
    return f"{average_gate_fidelity(cost, n):.12f}"


class ReportWriter:
    def __init__(self, templates_dir: Path = TEMPLATES_DIR):
        self.jenv = Environment(
            loader=FileSystemLoader(str(templates_dir)),
            autoescape=select_autoescape(["html", "xml"]),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.jenv.filters["cost"] = format_cost
        self.jenv.filters["ratio"] = _ratio
        self.jenv.filters["fidelity"] = _fidelity

    def render(
        self,
        model: Dict[str, Any],
        *,
        target: Optional[Dict[str, Any]] = None,
        runs: Optional[List[DepthRun]] = None,
        comparison: Optional[pd.DataFrame] = None,
        verification: Optional[List[Dict[str, Any]]] = None,
        cached: bool = False,
    ) -> str:
        template = self.jenv.get_template(REPORT_TEMPLATE)
        rows = [] if comparison is None else comparison.to_dict(orient="records")
        for row in rows:
            for key in ("best_order", "best_k"):
                value = row.get(key)
                row[key] = None if value is None or (isinstance(value, float) and math.isnan(value)) else int(value)
        return template.render(
            model=model,
            target=target,
            runs=sorted(runs or [], key=lambda r: r.depth),
            comparison=rows,
            verification=verification or [],
            cached=cached,
        )

    def write(self, path: Path, model: Dict[str, Any], **kwargs: Any) -> Path:
        path = Path(path)
        safe_write_text(path, self.render(model, **kwargs))
        return path

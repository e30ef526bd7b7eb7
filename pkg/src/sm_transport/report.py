"""Refinement-study records shared by every convergence experiment."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

# errors below this are treated as exact and excluded from ratio statistics
ERROR_FLOOR = 1e-14


def consecutive_ratios(errors: Sequence[float], floor: float = ERROR_FLOOR) -> list[float]:
    """``e_l / e_{l+1}`` for consecutive refinement levels.

    Pairs where the finer error is below ``floor`` are skipped: they carry no
    information about the decay rate.
    """
    out = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if fine > floor:
            out.append(coarse / fine)
    return out


def estimated_order(ratios: Iterable[float], factor: float = 2.0) -> float:
    ratios = [r for r in ratios if r > 0]
    if not ratios:
        return math.nan
    return float(np.median(np.log(ratios)) / math.log(factor))


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


@dataclass
class ConvergenceReport:
    """Errors against refinement level, one row per ``(level, seed)``.

    ``metric`` names the column whose decay the summary describes.
    """

    study: str
    columns: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    metric: str = "abs_error"
    summary: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    details: list[Any] = field(default_factory=list)

    def add(self, **row) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row is missing columns {sorted(missing)}")
        self.rows.append(row)

    def sort(self) -> None:
        self.rows.sort(key=lambda r: (r.get("level", 0), r.get("seed", 0)))

    def errors_by_seed(self) -> dict[int, list[float]]:
        out: dict[int, list[tuple[int, float]]] = {}
        for r in self.rows:
            out.setdefault(r.get("seed", 0), []).append((r["level"], float(r[self.metric])))
        return {s: [e for _, e in sorted(v)] for s, v in sorted(out.items())}

    def ratios(self) -> list[float]:
        out = []
        for errs in self.errors_by_seed().values():
            out.extend(consecutive_ratios(errs))
        return out

    def final_errors(self) -> list[float]:
        return [errs[-1] for errs in self.errors_by_seed().values()]

    def summarize(self, threshold: float | None = None) -> dict[str, Any]:
        """Recompute the summary from the rows."""
        self.sort()
        ratios = self.ratios()
        finals = self.final_errors()
        summary = {
            "median_ratio": float(np.median(ratios)) if ratios else math.nan,
            "estimated_order": estimated_order(ratios),
            "max_final_error": float(max(finals)) if finals else math.nan,
            "n_seeds": len(finals),
        }
        if threshold is not None:
            summary["threshold"] = threshold
            summary["quantile_pass_fraction"] = (
                float(np.mean([e <= threshold for e in finals])) if finals else math.nan
            )
        self.summary.update(summary)
        return self.summary

    def to_csv(self, path) -> None:
        self.sort()
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for r in self.rows:
                writer.writerow([_fmt(r[c]) for c in self.columns])

    def to_dict(self) -> dict[str, Any]:
        return {"study": self.study, "metric": self.metric, "summary": self.summary, "config": self.config}

    def to_json(self, path) -> None:
        dump_json(self.to_dict(), path)

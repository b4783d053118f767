"""JSON report documents and fixed-width text tables.

The JSON document is the single source of truth; the text tables are
renderings of values that also appear in it, rounded for display (effects to
0.1 mph, p-values to two decimals with ``<0.01`` below that).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, stats
from .matching import BalanceReport, OverlapReport
from .pipeline import Comparison, EvaluationResult, IterationRecord

__all__ = [
    "ASSUMPTIONS",
    "DASH",
    "ReportDocument",
    "config_hash",
    "data_period",
    "overlap_to_dict",
    "balance_to_dict",
    "iteration_to_dict",
    "result_to_dict",
    "comparison_to_dict",
    "format_p",
    "format_effect",
    "balance_table",
    "result_table",
    "iteration_table",
    "comparison_table",
]

DASH = "–"
ASSUMPTIONS = (
    "SUTVA: one observation's outcome does not depend on another's treatment status (not testable from data)",
    "CIA: outcomes are independent of treatment given the covariates (not testable from data)",
)


def _clean(value):
    """Recursively convert numpy scalars and non-finite floats for strict JSON."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def canonical_json(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def data_period(tables) -> dict:
    """First and last calendar day covered by the study windows.

    Used in place of wall-clock timestamps so reports stay byte-identical.
    """
    starts = [w.start_date for t in tables for w in t.windows]
    ends = [w.end_date for t in tables for w in t.windows]
    return {"start": min(starts).isoformat(), "end": max(ends).isoformat()}


@dataclass(frozen=True)
class ReportDocument:
    metadata: dict
    config: dict
    sections: dict

    @classmethod
    def build(cls, command: str, config: dict, sections: dict, seed: int, tables=()) -> "ReportDocument":
        metadata = {
            "tool": "trafficpsm",
            "version": __version__,
            "command": command,
            "seed": seed,
            "config_hash": config_hash(config),
            "timestamps": data_period(tables) if tables else {},
            "assumptions": list(ASSUMPTIONS),
        }
        return cls(_clean(metadata), _clean(config), _clean(sections))

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "config": self.config, **self.sections}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportDocument":
        doc = json.loads(text)
        metadata = doc.pop("metadata")
        config = doc.pop("config")
        return cls(metadata, config, doc)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    def hash_matches(self) -> bool:
        return config_hash(self.config) == self.metadata["config_hash"]


def _summary(s: stats.FiveNumberSummary) -> dict:
    return dict(s._asdict())


def overlap_to_dict(overlap: OverlapReport) -> dict:
    return {
        "treated_range": list(overlap.treated_range),
        "control_range": list(overlap.control_range),
        "coverage": overlap.coverage,
        "threshold": overlap.threshold,
        "pass": overlap.passed,
        "boxplot": {"treated": _summary(overlap.treated_summary), "control": _summary(overlap.control_summary)},
    }


def balance_to_dict(report: BalanceReport) -> dict:
    rows = []
    for r in report.rows:
        rows.append({
            "covariate": r.covariate,
            "mean_treated": r.mean_treated,
            "before": {"mean_control": r.mean_control_before, "t_p": r.t_p_before,
                       "ks_stat": r.ks_stat_before, "ks_p": r.ks_p_before},
            "after": {"mean_control": r.mean_control_after, "t_p": r.t_p_after,
                      "ks_stat": r.ks_stat_after, "ks_p": r.ks_p_after},
            "pass": r.passes(report.alpha),
        })
    return {"alpha": report.alpha, "balanced": report.balanced, "failing": report.failing,
            "mean_ks_after": report.mean_ks_after, "rows": rows}


def iteration_to_dict(rec: IterationRecord) -> dict:
    doc = {
        "m": rec.m,
        "windows": list(rec.windows),
        "n_control": rec.n_control,
        "coverage": rec.coverage,
        "csc_pass": rec.csc_passed,
        "balanced": rec.balanced,
        "failing": rec.failing,
    }
    if rec.balance is not None:
        doc["mean_ks_after"] = rec.balance.mean_ks_after
        doc["min_t_p_after"] = min(r.t_p_after for r in rec.balance.rows)
        doc["min_ks_p_after"] = min(r.ks_p_after for r in rec.balance.rows)
        doc["balance"] = balance_to_dict(rec.balance)
    return doc


def result_to_dict(result: EvaluationResult) -> dict:
    return {
        "status": "ok",
        "segment_id": result.segment_id,
        "method": result.method.value,
        "effect_mph": result.effect_mph,
        "effect_p": result.effect_p,
        "sample_size_weeks": result.sample_size_weeks,
        "n_treated": result.n_treated,
        "n_unique_controls": result.n_unique_controls,
        "with_replacement": result.with_replacement,
        "overlap": overlap_to_dict(result.overlap),
        "balance": balance_to_dict(result.balance),
        "iterations": [iteration_to_dict(r) for r in result.trace],
    }


def failure_to_dict(segment_id: str, method: str, status: str, message: str, trace=()) -> dict:
    return {
        "status": status,
        "segment_id": segment_id,
        "method": method,
        "effect_mph": DASH,
        "effect_p": DASH,
        "sample_size_weeks": DASH,
        "message": message,
        "iterations": [iteration_to_dict(r) for r in trace],
    }


def comparison_to_dict(comparison: Comparison) -> dict:
    methods = {}
    for o in comparison.outcomes:
        if o.ok:
            methods[o.method.value] = result_to_dict(o.result)
        else:
            status = "insufficient_control_pool" if o.failure == "insufficient_control_pool" else "model_fit_error"
            methods[o.method.value] = failure_to_dict(comparison.segment_id, o.method.value, status, str(o.error), o.trace)
    return {"segment_id": comparison.segment_id, "methods": methods}


def ecdf_to_dict(a) -> dict:
    xs, fs = stats.ecdf_points(a)
    return {"x": xs, "F": fs}


# text rendering

def format_p(p) -> str:
    if not isinstance(p, (int, float)):
        return DASH
    return "<0.01" if p < 0.01 else f"{p:.2f}"


def format_effect(e) -> str:
    if not isinstance(e, (int, float)):
        return DASH
    return f"{e:.1f}"


def _render(header: list, rows: list, title: Optional[str] = None) -> str:
    cols = list(zip(header, *rows)) if rows else [(h,) for h in header]
    widths = [max(len(str(c)) for c in col) for col in cols]
    line = lambda cells: "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [title] if title else []
    out.append(line(header))
    out.append("  ".join("-" * w for w in widths))
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def balance_table(balance: dict, title: Optional[str] = None) -> str:
    header = ["Covariate", "Mean T", "Mean C", "t p", "KS", "KS p", "|", "Mean C*", "t p*", "KS*", "KS p*", "Pass"]
    rows = []
    for r in balance["rows"]:
        b, a = r["before"], r["after"]
        rows.append([
            r["covariate"], f"{r['mean_treated']:.1f}",
            f"{b['mean_control']:.1f}", format_p(b["t_p"]), f"{b['ks_stat']:.2f}", format_p(b["ks_p"]), "|",
            f"{a['mean_control']:.1f}", format_p(a["t_p"]), f"{a['ks_stat']:.2f}", format_p(a["ks_p"]),
            "yes" if r["pass"] else "no",
        ])
    text = _render(header, rows, title)
    return text + "\n(* after matching)"


def result_table(results: list) -> str:
    header = ["Segment", "Method", "Effect (mph)", "T-test p-value", "Sample size (week)"]
    rows = []
    for r in results:
        weeks = r["sample_size_weeks"]
        rows.append([r["segment_id"], r["method"], format_effect(r["effect_mph"]), format_p(r["effect_p"]),
                     str(weeks) if isinstance(weeks, int) else DASH])
    return _render(header, rows)


def iteration_table(result: dict) -> str:
    header = ["Sample size (week)", "Coverage", "CSC", "Mean KS*", "Min t p*", "Min KS p*", "Balanced", "Effect (mph)", "p"]
    rows = []
    final = result["sample_size_weeks"]
    for it in result["iterations"]:
        has_balance = "balance" in it
        is_final = it["m"] == final
        rows.append([
            str(it["m"]), f"{it['coverage']:.2f}", "pass" if it["csc_pass"] else "fail",
            f"{it['mean_ks_after']:.2f}" if has_balance else DASH,
            format_p(it["min_t_p_after"]) if has_balance else DASH,
            format_p(it["min_ks_p_after"]) if has_balance else DASH,
            DASH if it["balanced"] is None else ("yes" if it["balanced"] else "no"),
            format_effect(result["effect_mph"]) if is_final else DASH,
            format_p(result["effect_p"]) if is_final else DASH,
        ])
    return _render(header, rows, f"{result['segment_id']} ({result['method']})")


def comparison_table(comparisons: list) -> str:
    """Methods as rows, segments as columns; cells are ``effect (p), m`` or a dash."""
    segments = [c["segment_id"] for c in comparisons]
    methods = list(comparisons[0]["methods"]) if comparisons else []
    rows = []
    for m in methods:
        cells = [m]
        for c in comparisons:
            r = c["methods"][m]
            if r["status"] == "ok":
                cells.append(f"{format_effect(r['effect_mph'])} ({format_p(r['effect_p'])}), {r['sample_size_weeks']}w")
            else:
                cells.append(DASH)
        rows.append(cells)
    return _render(["Method", *segments], rows)
